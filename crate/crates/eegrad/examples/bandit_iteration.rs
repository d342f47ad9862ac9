//! One full selection loop at a fixed iterate: T rounds split between
//! exploring the oracle bank and exploiting its apparent best arm.

use std::sync::Arc;

use eegrad::math::EeGradParams;
use eegrad::oracle::{NoiseShape, OracleBank};
use eegrad::selector::run_iteration;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let bank = OracleBank::direct(
        Arc::new(|w: &[f64]| w.to_vec()),
        NoiseShape::SquaredGradient,
        vec![50.0, 26.0, 16.7],
        2,
    )
    .unwrap();
    let w = [1.0, 1.0];
    let params = EeGradParams::new(3.0, 60.0, 2.0, 100.0, 2, 2000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let out = run_iteration(&bank, &w, &params, &mut rng).unwrap();

    println!("pulls over {} rounds:", params.rounds);
    for (n, (&pulls, &sigma_sq)) in out.pull_counts.iter().zip(bank.sigma_sq()).enumerate() {
        println!("  oracle {} (sigma^2 = {:>4}): {pulls}", n + 1, sigma_sq);
    }
    println!("pseudo-regret of this run: {:.2}", out.pseudo_regret);

    let err: f64 = out
        .gradient
        .iter()
        .zip(&w)
        .map(|(g, v)| (g - v) * (g - v))
        .sum();
    println!("estimate error ||G - grad F||^2 = {err:.5}");
    println!(
        "optimal-oracle yardstick sigma_*^2 S / T = {:.5}",
        bank.sigma_star_sq() * bank.trace_s(&w).unwrap() / params.rounds as f64
    );

    // First rounds cycle the bank twice before the adaptive rule starts.
    let head: Vec<String> = out.pull_log[..8]
        .iter()
        .map(|(round, oracle)| format!("{round}->{oracle}"))
        .collect();
    println!("first picks: {}", head.join(" "));
}
