//! The whole harness end to end: parse a config, run the seeded
//! ensemble, and read the aggregate curves back out. Writes the same
//! gaps.csv / pulls.csv / summary.json the command line produces.

use std::path::Path;

use eegrad::experiment::{run_experiment, ExperimentConfig, EE_GRAD_LABEL, OPTIMAL_LABEL};

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml");
    let mut config = ExperimentConfig::from_path(&path).unwrap();
    config.output_dir = std::env::temp_dir().join("eegrad-example");
    config.realizations = 200;

    let result = run_experiment(&config).unwrap();

    println!(
        "ran {} realizations x {} trial budgets in {:.2}s on {} threads",
        config.realizations,
        config.trials_t.len(),
        result.wall_time_secs,
        result.threads
    );
    for &t in &config.trials_t {
        println!("\nmean gap per iteration, T = {t}:");
        let adaptive = result.gap_curve(t, EE_GRAD_LABEL);
        let optimal = result.gap_curve(t, OPTIMAL_LABEL);
        println!("{:>2} {:>12} {:>12}", "k", "adaptive", "optimal");
        for k in 0..adaptive.len() {
            println!("{k:>2} {:>12.6} {:>12.6}", adaptive[k], optimal[k]);
        }
    }
    println!("\nfiles under {}", config.output_dir.display());
}
