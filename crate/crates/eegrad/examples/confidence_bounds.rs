//! How the variance confidence radius tightens with pulls, and how its
//! inverse turns a target separation into a pull budget.

use eegrad::math::{conf_radius, conf_radius_inverse, regret_threshold, EeGradParams};

fn main() {
    // alpha, beta, P, c, dimension, rounds per estimate
    let params = EeGradParams::new(3.0, 60.0, 2.0, 100.0, 2, 2000).unwrap();
    let t = params.rounds as f64;

    println!("confidence radius after gamma pulls, T = {}", params.rounds);
    println!("{:>6} {:>12}", "gamma", "radius");
    for gamma in [2u32, 4, 8, 32, 128, 512, 2000] {
        let x = params.alpha * t.ln() / (gamma as f64 - 1.0);
        println!("{gamma:>6} {:>12.4}", conf_radius(x, &params).unwrap());
    }

    // Planning direction: a suboptimal oracle stops being picked once its
    // radius falls under half its variance gap (scaled by the trace).
    let delta = 9.3;
    let trace_s = 2.0;
    let eps = delta * trace_s / 2.0;
    let x = conf_radius_inverse(eps, &params).unwrap();
    println!("\nhalf-gap separation {eps}: phi = {x:.6}");
    println!(
        "predicted pull ceiling: {} of {} rounds",
        regret_threshold(delta, trace_s, &params).unwrap(),
        params.rounds
    );
}
