//! Adaptive selection against the oracle that knows the best arm, on one
//! seeded SGD run sharing its noise across all three columns. A single
//! realization can land either way; the expectation ordering is the
//! ensemble harness's job (see full_experiment).

use std::sync::Arc;

use eegrad::math::EeGradParams;
use eegrad::oracle::{NoiseShape, OracleBank};
use eegrad::sgd::{
    run_ee_grad_sgd, run_fixed_oracle_sgd, run_optimal_oracle_sgd, Objective, StepSchedule,
    StepSizeCheck, TraceBoundPolicy,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let objective = Objective::quadratic(2);
    let bank = OracleBank::direct(
        Arc::new(|w: &[f64]| w.to_vec()),
        NoiseShape::SquaredGradient,
        vec![50.0, 26.0, 16.7],
        2,
    )
    .unwrap();
    let w_init = [3.0, 4.0];
    let params = EeGradParams::new(3.0, 60.0, 25.0, 100.0, 2, 500).unwrap();
    let schedule = StepSchedule::Constant(0.85);
    let policy = TraceBoundPolicy::PerIteration { margin: 1.0 };
    let iterations = 5;

    // Same stream for every run, so the three columns see identical noise.
    let adaptive = run_ee_grad_sgd(
        &objective,
        &bank,
        &params,
        policy,
        &schedule,
        iterations,
        StepSizeCheck::Warn,
        &w_init,
        &mut ChaCha8Rng::seed_from_u64(42),
    )
    .unwrap();
    let optimal = run_optimal_oracle_sgd(
        &objective,
        &bank,
        &params,
        &schedule,
        iterations,
        StepSizeCheck::Warn,
        &w_init,
        &mut ChaCha8Rng::seed_from_u64(42),
    )
    .unwrap();
    let worst = run_fixed_oracle_sgd(
        &objective,
        &bank,
        &params,
        1,
        &schedule,
        iterations,
        StepSizeCheck::Warn,
        &w_init,
        &mut ChaCha8Rng::seed_from_u64(42),
    )
    .unwrap();

    println!("optimality gap per iteration, T = {} rounds", params.rounds);
    println!(
        "{:>2} {:>12} {:>12} {:>12}",
        "k", "adaptive", "optimal", "worst arm"
    );
    for k in 0..=iterations as usize {
        println!(
            "{k:>2} {:>12.6} {:>12.6} {:>12.6}",
            adaptive.gaps[k], optimal.gaps[k], worst.gaps[k]
        );
    }

    println!("\nadaptive pulls per iteration (oracle 1, 2, 3):");
    for (k, pulls) in adaptive.pulls.iter().enumerate() {
        println!("  k = {}: {pulls:?}", k + 1);
    }
}
