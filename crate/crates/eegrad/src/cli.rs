//! Command-line front end: `run`, `validate`, `constants`, and `regret`
//! subcommands over a TOML experiment config. Exit codes: 0 success,
//! 1 config or usage error, 2 runtime error.

use crate::error::{Error, Result};
use crate::experiment::output::format_float;
use crate::experiment::{realization_rng, run_experiment, ExperimentConfig};
use crate::math::{gap_constants, regret_threshold, GAP_TOLERANCE};
use crate::selector::run_iteration;
use crate::sgd::predicted_contraction;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "eegrad",
    version,
    about = "Budgeted gradient-oracle selection experiments",
    no_binary_name = true,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the config's base_seed
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "INT")]
    threads: Option<usize>,
    /// Override the config's output_dir
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the Monte Carlo ensemble and write gaps.csv, pulls.csv, summary.json
    Run { config: PathBuf },
    /// Check a config file and report the first offending field
    Validate { config: PathBuf },
    /// Print bound constants and contraction factors per T at a canonical iterate
    Constants { config: PathBuf },
    /// Sweep selector pseudo-regret over T without the outer SGD loop
    Regret { config: PathBuf },
}

pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };

    let path = match &cli.command {
        Command::Run { config }
        | Command::Validate { config }
        | Command::Constants { config }
        | Command::Regret { config } => config.clone(),
    };
    let mut config = match ExperimentConfig::from_path(&path) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("config error in {}: {e}", path.display());
            return 1;
        }
    };
    if let Some(seed) = cli.seed {
        config.base_seed = seed;
    }
    if let Some(output) = &cli.output {
        config.output_dir = output.clone();
    }
    if let Err(e) = config.validate() {
        eprintln!("config error in {}: {e}", path.display());
        return 1;
    }

    let outcome = match cli.command {
        Command::Validate { .. } => {
            match config.build_bank(1.0) {
                Ok(bank) => {
                    println!(
                        "config ok: {} oracles, T = {:?}, K = {}, R = {}",
                        bank.len(),
                        config.trials_t,
                        config.iterations,
                        config.realizations
                    );
                    Ok(())
                }
                Err(e) => {
                    eprintln!("config error in {}: {e}", path.display());
                    return 1;
                }
            }
        }
        Command::Run { .. } => with_threads(cli.threads, || {
            let result = run_experiment(&config)?;
            let dir = config.output_dir.display();
            println!(
                "wrote {dir}/gaps.csv, {dir}/pulls.csv, {dir}/summary.json \
                 ({:.2}s, {} threads)",
                result.wall_time_secs, result.threads
            );
            Ok(())
        }),
        Command::Constants { .. } => print_constants(&config),
        Command::Regret { .. } => with_threads(cli.threads, || run_regret(&config)),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn with_threads<F: FnOnce() -> Result<()> + Send>(threads: Option<usize>, f: F) -> Result<()> {
    match threads {
        None => f(),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("threads: {e}")))?;
            pool.install(f)
        }
    }
}

/// Iterate every per-T table is evaluated at: the all-equal point at the
/// configured initial radius.
fn canonical_iterate(config: &ExperimentConfig) -> Vec<f64> {
    vec![config.init_radius / (config.dim as f64).sqrt(); config.dim]
}

fn print_constants(config: &ExperimentConfig) -> Result<()> {
    let objective = config.build_objective();
    let w = canonical_iterate(config);
    let eta = config.step_size.to_schedule().at(0);
    println!(
        "canonical iterate: radius {} in R^{}",
        config.init_radius, config.dim
    );
    for &trials in &config.trials_t {
        let factor = config.sigma_factor(trials);
        let bank = config.build_bank(factor)?;
        let trace_s = bank.trace_s(&w)?;
        let max_sigma_sq = bank.sigma_sq().iter().cloned().fold(f64::MIN, f64::max);
        let params = config.build_params(trials, max_sigma_sq, trace_s)?;
        let constants = gap_constants(bank.sigma_sq(), trace_s, &params)?;

        println!();
        println!(
            "T = {trials}  (sigma factor {}, N = {}, S(w) = {})",
            format_float(factor),
            bank.len(),
            format_float(trace_s)
        );
        println!(
            "  alpha = {}  beta = {}  P = {}  c = {}",
            params.alpha,
            format_float(params.beta),
            format_float(params.p_bound),
            format_float(params.c_const)
        );
        println!("  {:<3} {:<16} {:<16} {:<10}", "n", "sigma_eff^2", "delta", "M_n");
        for (n, (&sigma_sq, &delta)) in bank.sigma_sq().iter().zip(&constants.deltas).enumerate() {
            let threshold = if delta > GAP_TOLERANCE {
                regret_threshold(delta, trace_s, &params)?.to_string()
            } else {
                "-".into()
            };
            println!(
                "  {:<3} {:<16} {:<16} {:<10}",
                n + 1,
                format_float(sigma_sq),
                format_float(delta),
                threshold
            );
        }
        println!(
            "  C1 = {}  C2 = {}",
            format_float(constants.c1),
            format_float(constants.c2)
        );
        println!("  Z_T = {}", format_float(constants.z_t));
        let bound = 2.0 / (objective.lipschitz * (1.0 + constants.z_t));
        println!(
            "  step bound = {}  eta = {}",
            format_float(bound),
            format_float(eta)
        );
        if eta < bound {
            let factors = predicted_contraction(&objective, &bank, &params, eta, &w)?;
            println!(
                "  tau_opt = {}  tau_alg = {}  overhead = {}",
                format_float(factors.tau_opt),
                format_float(factors.tau_alg),
                format_float(factors.overhead)
            );
        } else {
            println!("  tau: eta exceeds the step bound; no contraction is guaranteed");
        }
    }
    Ok(())
}

fn run_regret(config: &ExperimentConfig) -> Result<()> {
    let w = canonical_iterate(config);
    let r_total = config.realizations;
    println!(
        "{:<8} {:<13} {:<20} {:<16} {}",
        "T", "realizations", "mean_pseudo_regret", "std_err", "bound"
    );
    let mut csv = String::from("T,realizations,mean_pseudo_regret,std_err,bound\n");
    for &trials in &config.trials_t {
        let bank = config.build_bank(config.sigma_factor(trials))?;
        let trace_s = bank.trace_s(&w)?;
        let max_sigma_sq = bank.sigma_sq().iter().cloned().fold(f64::MIN, f64::max);
        let params = config.build_params(trials, max_sigma_sq, trace_s)?;
        let constants = gap_constants(bank.sigma_sq(), trace_s, &params)?;
        let regrets: Vec<f64> = (0..r_total)
            .into_par_iter()
            .map(|r| -> Result<f64> {
                let mut rng = realization_rng(config.base_seed, trials, 0, r);
                Ok(run_iteration(&bank, &w, &params, &mut rng)?.pseudo_regret)
            })
            .collect::<Result<Vec<_>>>()?;
        let n = regrets.len() as f64;
        let mean = regrets.iter().sum::<f64>() / n;
        let std_err = if regrets.len() < 2 {
            0.0
        } else {
            (regrets.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        };
        let bound = trace_s * (constants.c1 * (trials as f64).ln() + constants.c2);
        println!(
            "{:<8} {:<13} {:<20} {:<16} {}",
            trials,
            r_total,
            format_float(mean),
            format_float(std_err),
            format_float(bound)
        );
        use std::fmt::Write as _;
        writeln!(
            csv,
            "{trials},{r_total},{},{},{}",
            format_float(mean),
            format_float(std_err),
            format_float(bound)
        )
        .expect("string write");
    }
    std::fs::create_dir_all(&config.output_dir)?;
    std::fs::write(config.output_dir.join("regret.csv"), csv)?;
    println!("wrote {}/regret.csv", config.output_dir.display());
    Ok(())
}
