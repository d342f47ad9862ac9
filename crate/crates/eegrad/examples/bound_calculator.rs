//! The bound calculator: inflation constants, contraction factors, and
//! the pseudo-regret envelope as the round budget grows.

use std::sync::Arc;

use eegrad::math::{contraction_factors, gap_constants, EeGradParams};
use eegrad::oracle::{NoiseShape, OracleBank};

fn main() {
    let bank = OracleBank::direct(
        Arc::new(|w: &[f64]| w.to_vec()),
        NoiseShape::SquaredGradient,
        vec![50.0, 26.0, 16.7],
        2,
    )
    .unwrap();
    let w = [1.0, 1.0];
    let trace_s = bank.trace_s(&w).unwrap();
    let eta = 0.85;

    println!(
        "bank ({:?}) at S(w) = {trace_s}, eta = {eta}",
        bank.sigma_sq()
    );
    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>12}",
        "T", "Z_T", "tau_opt", "tau_alg", "overhead", "Z excess", "regret env"
    );
    for t in [50u32, 200, 1000, 3000, 10_000] {
        let params = EeGradParams::new(3.0, 60.0, 2.0, 100.0, 2, t).unwrap();
        let constants = gap_constants(bank.sigma_sq(), trace_s, &params).unwrap();
        let star_over_t = constants.sigma_star_sq / t as f64;
        let factors =
            contraction_factors(eta, 1.0, 1.0, star_over_t, constants.z_t).unwrap();
        let envelope = trace_s * (constants.c1 * (t as f64).ln() + constants.c2);
        println!(
            "{t:>6} {:>10.5} {:>10.5} {:>10.5} {:>10.2e} {:>9.2}% {:>12.1}",
            constants.z_t,
            factors.tau_opt,
            factors.tau_alg,
            factors.overhead,
            100.0 * (constants.z_t - star_over_t) / star_over_t,
            envelope
        );
    }
    println!("\nboth factors approach (1 - eta)^2 + eta^2 sigma_*^2 / T; the");
    println!("overhead column is the whole cost of having to find the arm");
}
