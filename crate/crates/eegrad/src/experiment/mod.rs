//! Monte Carlo harness: seeded ensembles of adaptive-selector SGD
//! against the optimal-oracle baseline and optional fixed-oracle arms,
//! aggregated per (T, algorithm, iteration) and emitted as CSV plus a
//! run manifest.

pub mod config;
pub mod output;

pub use config::ExperimentConfig;
pub use output::{emit_csv, write_summary};

use crate::error::Result;
use crate::sgd::{
    run_ee_grad_sgd, run_fixed_oracle_sgd, run_optimal_oracle_sgd, Objective, TraceBoundPolicy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

pub const EE_GRAD_LABEL: &str = "ee_grad";
pub const OPTIMAL_LABEL: &str = "optimal";

pub fn oracle_label(n: usize) -> String {
    format!("oracle_{n}")
}

/// Mean gap row keyed by (T, algorithm, iteration); iteration 0 is the
/// initial iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub trials: u32,
    pub algorithm: String,
    pub iteration: u32,
    pub mean_gap: f64,
    pub std_err: f64,
    pub realizations: u32,
}

/// Mean pull counts for the adaptive run; sums to T over oracles at each
/// (T, iteration).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PullRow {
    pub trials: u32,
    pub iteration: u32,
    pub oracle: usize,
    pub mean_pulls: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretRow {
    pub trials: u32,
    pub iteration: u32,
    pub mean_pseudo_regret: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone)]
pub struct AggregateResult {
    pub gaps: Vec<GapRow>,
    pub pulls: Vec<PullRow>,
    pub pseudo_regret: Vec<RegretRow>,
    pub wall_time_secs: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Algorithm {
    EeGrad,
    Optimal,
    Fixed(usize),
}

impl Algorithm {
    fn label(self) -> String {
        match self {
            Self::EeGrad => EE_GRAD_LABEL.into(),
            Self::Optimal => OPTIMAL_LABEL.into(),
            Self::Fixed(n) => oracle_label(n),
        }
    }

    fn stream(self, common_seed: bool) -> u64 {
        if common_seed {
            return 0;
        }
        match self {
            Self::EeGrad => 0,
            Self::Optimal => 1,
            Self::Fixed(n) => 1 + n as u64,
        }
    }
}

/// Stream reserved for drawing the initial iterate; shared by every
/// algorithm within a realization so their runs start at the same point.
const INIT_STREAM: u64 = u64::MAX;

/// Deterministic generator for one (T, stream, realization) cell. The
/// seed packs all four coordinates, so distinct cells get independent
/// streams and thread scheduling cannot affect any draw.
pub fn realization_rng(base_seed: u64, trials: u32, stream: u64, realization: u32) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&base_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&(trials as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&stream.to_le_bytes());
    seed[24..32].copy_from_slice(&(realization as u64).to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Uniform draw from the sphere of the given radius.
pub fn sample_sphere<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.iter().map(|x| x * radius / norm).collect();
        }
    }
}

struct RealizationOutput {
    /// Gap sequence per algorithm, in algorithm-list order.
    gaps: Vec<Vec<f64>>,
    /// Adaptive run's pull counts, iterations x oracles.
    pulls: Vec<Vec<u32>>,
    regrets: Vec<f64>,
    p_exceeded: bool,
    step_violations: u32,
    first_violation: Option<crate::sgd::StepViolation>,
}

fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn run_trial(
    config: &ExperimentConfig,
    objective: &Objective,
    trials: u32,
    result: &mut AggregateResult,
) -> Result<usize> {
    let bank = config.build_bank(config.sigma_factor(trials))?;
    let max_sigma_sq = bank.sigma_sq().iter().cloned().fold(f64::MIN, f64::max);
    let beta = config.algorithm.resolved_beta(max_sigma_sq);
    if beta < max_sigma_sq {
        log::warn!(
            "T = {trials}: beta = {beta:.6e} is below the largest effective variance \
             {max_sigma_sq:.6e}; the confidence radius is not a valid sub-Gaussian proxy"
        );
    }

    let mut algorithms = vec![Algorithm::EeGrad, Algorithm::Optimal];
    if config.comparison_arms {
        algorithms.extend((1..=bank.len()).map(Algorithm::Fixed));
    }
    let schedule = config.step_size.to_schedule();
    let check = config.step_check.to_check();
    let p_policy = config.algorithm.trace_bound_policy();
    let k_iters = config.iterations;
    let r_total = config.realizations;

    let outputs: Vec<RealizationOutput> = (0..r_total)
        .into_par_iter()
        .map(|r| -> Result<RealizationOutput> {
            let mut init_rng = realization_rng(config.base_seed, trials, INIT_STREAM, r);
            let w_init = sample_sphere(config.dim, config.init_radius, &mut init_rng);
            let trace_init = bank.trace_s(&w_init)?;
            let params = config.build_params(trials, max_sigma_sq, trace_init)?;

            let mut gaps = Vec::with_capacity(algorithms.len());
            let mut pulls = Vec::new();
            let mut regrets = Vec::new();
            let mut max_trace = trace_init;
            let mut step_violations = 0u32;
            let mut first_violation = None;
            for &algorithm in &algorithms {
                let mut rng = realization_rng(
                    config.base_seed,
                    trials,
                    algorithm.stream(config.common_seed),
                    r,
                );
                let trace = match algorithm {
                    Algorithm::EeGrad => run_ee_grad_sgd(
                        objective, &bank, &params, p_policy, &schedule, k_iters, check, &w_init,
                        &mut rng,
                    )?,
                    Algorithm::Optimal => run_optimal_oracle_sgd(
                        objective, &bank, &params, &schedule, k_iters, check, &w_init, &mut rng,
                    )?,
                    Algorithm::Fixed(n) => run_fixed_oracle_sgd(
                        objective, &bank, &params, n, &schedule, k_iters, check, &w_init, &mut rng,
                    )?,
                };
                if algorithm == Algorithm::EeGrad {
                    for w in &trace.iterates {
                        max_trace = max_trace.max(bank.trace_s(w)?);
                    }
                    pulls = trace.pulls.clone();
                    regrets = trace.pseudo_regrets.clone();
                }
                step_violations += trace.step_violations;
                if first_violation.is_none() {
                    first_violation = trace.first_violation;
                }
                gaps.push(trace.gaps);
            }
            // Under the per-iteration policy P tracks the iterate with a
            // margin of at least 1, so the sup-of-run check only applies
            // to a fixed bound.
            let p_exceeded =
                p_policy == TraceBoundPolicy::Fixed && max_trace > params.p_bound;
            Ok(RealizationOutput {
                gaps,
                pulls,
                regrets,
                p_exceeded,
                step_violations,
                first_violation,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let step_violations: u64 = outputs.iter().map(|o| o.step_violations as u64).sum();
    if step_violations > 0 {
        let checked = r_total as u64 * algorithms.len() as u64 * k_iters as u64;
        let first = outputs
            .iter()
            .find_map(|o| o.first_violation)
            .expect("counted violations imply a record");
        log::warn!(
            "T = {trials}: step size exceeded the per-iterate bound in {step_violations} of \
             {checked} checked steps (e.g. iteration {}: eta {:.6e}, bound {:.6e}); the \
             contraction guarantee does not cover those steps",
            first.iteration,
            first.eta,
            first.bound
        );
    }

    for (a, algorithm) in algorithms.iter().enumerate() {
        let label = algorithm.label();
        for k in 0..=k_iters {
            let values: Vec<f64> = outputs.iter().map(|o| o.gaps[a][k as usize]).collect();
            let (mean_gap, std_err) = mean_and_std_err(&values);
            result.gaps.push(GapRow {
                trials,
                algorithm: label.clone(),
                iteration: k,
                mean_gap,
                std_err,
                realizations: r_total,
            });
        }
    }
    for k in 0..k_iters as usize {
        for n in 0..bank.len() {
            let mean_pulls = outputs.iter().map(|o| o.pulls[k][n] as f64).sum::<f64>()
                / r_total as f64;
            result.pulls.push(PullRow {
                trials,
                iteration: k as u32 + 1,
                oracle: n + 1,
                mean_pulls,
            });
        }
        let values: Vec<f64> = outputs.iter().map(|o| o.regrets[k]).collect();
        let (mean_pseudo_regret, std_err) = mean_and_std_err(&values);
        result.pseudo_regret.push(RegretRow {
            trials,
            iteration: k as u32 + 1,
            mean_pseudo_regret,
            std_err,
        });
    }
    Ok(outputs.iter().filter(|o| o.p_exceeded).count())
}

/// Runs the full configured ensemble and writes gaps.csv, pulls.csv, and
/// summary.json under the config's output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateResult> {
    config.validate()?;
    let objective = config.build_objective();
    let start = Instant::now();
    let mut result = AggregateResult {
        gaps: Vec::new(),
        pulls: Vec::new(),
        pseudo_regret: Vec::new(),
        wall_time_secs: 0.0,
        threads: rayon::current_num_threads(),
    };
    let mut p_exceeded_total = 0usize;
    for &trials in &config.trials_t {
        let trial_start = Instant::now();
        p_exceeded_total += run_trial(config, &objective, trials, &mut result)?;
        log::info!(
            "T = {trials}: {} realizations in {:.2}s",
            config.realizations,
            trial_start.elapsed().as_secs_f64()
        );
    }
    if p_exceeded_total > 0 {
        let total_runs = config.trials_t.len() as u64 * config.realizations as u64;
        log::warn!(
            "trace bound P was exceeded along the adaptive trajectory in {p_exceeded_total} of \
             {total_runs} runs; confidence radii were too narrow there"
        );
    }
    result.sort_rows();
    result.wall_time_secs = start.elapsed().as_secs_f64();
    emit_csv(&result, &config.output_dir)?;
    write_summary(&result, config, &config.output_dir)?;
    Ok(result)
}

impl AggregateResult {
    pub fn sort_rows(&mut self) {
        self.gaps.sort_by(|a, b| {
            (a.trials, &a.algorithm, a.iteration).cmp(&(b.trials, &b.algorithm, b.iteration))
        });
        self.pulls.sort_by_key(|r| (r.trials, r.iteration, r.oracle));
        self.pseudo_regret.sort_by_key(|r| (r.trials, r.iteration));
    }

    pub fn gap_curve(&self, trials: u32, algorithm: &str) -> Vec<f64> {
        let mut rows: Vec<&GapRow> = self
            .gaps
            .iter()
            .filter(|r| r.trials == trials && r.algorithm == algorithm)
            .collect();
        rows.sort_by_key(|r| r.iteration);
        rows.iter().map(|r| r.mean_gap).collect()
    }
}
