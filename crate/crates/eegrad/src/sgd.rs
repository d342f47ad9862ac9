//! Outer SGD loops over a gradient oracle bank: one driven by the
//! adaptive selector, one pinned to a single oracle (the optimal-oracle
//! baseline and fixed comparison arms), plus the per-step contraction
//! prediction connecting measured decay to the bound constants.

use crate::error::{Error, Result};
use crate::math::{contraction_factors, gap_constants, ContractionFactors, EeGradParams};
use crate::oracle::OracleBank;
use crate::selector::run_iteration;
use rand::Rng;
use std::fmt;
use std::sync::Arc;

type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Smooth, strongly convex objective with a known minimizer.
#[derive(Clone)]
pub struct Objective {
    pub eval: ScalarField,
    pub gradient: VectorField,
    pub strong_convexity: f64,
    pub lipschitz: f64,
    pub minimizer: Vec<f64>,
    pub min_value: f64,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("strong_convexity", &self.strong_convexity)
            .field("lipschitz", &self.lipschitz)
            .field("minimizer", &self.minimizer)
            .field("min_value", &self.min_value)
            .finish()
    }
}

impl Objective {
    /// F(w) = ||w||^2 / 2 with gradient w, curvature 1 in both senses,
    /// minimized at the origin.
    pub fn quadratic(dim: usize) -> Self {
        Self {
            eval: Arc::new(|w: &[f64]| 0.5 * w.iter().map(|v| v * v).sum::<f64>()),
            gradient: Arc::new(|w: &[f64]| w.to_vec()),
            strong_convexity: 1.0,
            lipschitz: 1.0,
            minimizer: vec![0.0; dim],
            min_value: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.minimizer.len()
    }

    /// Optimality gap F(w) - F(w*).
    pub fn gap(&self, w: &[f64]) -> f64 {
        (self.eval)(w) - self.min_value
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strong_convexity > 0.0) || !self.strong_convexity.is_finite() {
            return Err(Error::InvalidParameter {
                name: "strong_convexity",
                reason: format!("must be finite and positive, got {}", self.strong_convexity),
            });
        }
        if !(self.lipschitz >= self.strong_convexity) || !self.lipschitz.is_finite() {
            return Err(Error::InvalidParameter {
                name: "lipschitz",
                reason: format!(
                    "must be finite and at least the strong convexity {}, got {}",
                    self.strong_convexity, self.lipschitz
                ),
            });
        }
        if self.minimizer.is_empty() {
            return Err(Error::InvalidParameter {
                name: "minimizer",
                reason: "dimension must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// What to do when a step size violates the per-iterate bound
/// 2 / (L (1 + Z_T(w))). The bound degenerates near the minimizer (the
/// inflation constants blow up as S(w) -> 0), so `Warn` records the
/// violations on the returned trace instead of erroring; ensemble
/// drivers aggregate those records into one report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepSizeCheck {
    Strict,
    #[default]
    Warn,
    Off,
}

/// One recorded step-size violation under `Warn` mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepViolation {
    pub iteration: u32,
    pub eta: f64,
    pub bound: f64,
}

/// How the selector's trace bound P evolves across SGD iterations.
///
/// A bound fixed at the initial iterate becomes loose as the iterates
/// contract (the local traces shrink while the confidence radii, which
/// scale with beta P, do not), driving the selector back toward uniform
/// exploration late in the run. Re-anchoring P at each iterate keeps the
/// radii matched to the local problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceBoundPolicy {
    /// Keep `params.p_bound` for every iteration.
    Fixed,
    /// Set P to `margin * S(w_k)` at the start of iteration k; requires
    /// margin >= 1 for the bound to stay valid at the iterate.
    PerIteration { margin: f64 },
}

/// Constant or per-iteration step sizes.
#[derive(Debug, Clone)]
pub enum StepSchedule {
    Constant(f64),
    PerIteration(Vec<f64>),
}

impl StepSchedule {
    pub fn validate(&self, iterations: u32) -> Result<()> {
        let check = |eta: f64| -> Result<()> {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "step_size",
                    reason: format!("must be finite and positive, got {eta}"),
                });
            }
            Ok(())
        };
        match self {
            Self::Constant(eta) => check(*eta),
            Self::PerIteration(etas) => {
                if etas.len() != iterations as usize {
                    return Err(Error::InvalidParameter {
                        name: "step_size",
                        reason: format!(
                            "schedule has {} entries but the run has {iterations} iterations",
                            etas.len()
                        ),
                    });
                }
                etas.iter().try_for_each(|&eta| check(eta))
            }
        }
    }

    pub fn at(&self, k: usize) -> f64 {
        match self {
            Self::Constant(eta) => *eta,
            Self::PerIteration(etas) => etas[k],
        }
    }
}

/// Record of one SGD run: K + 1 iterates and gaps, K pull-count rows,
/// step sizes, per-iteration pseudo-regret diagnostics, and any
/// step-size violations observed under `Warn` mode.
#[derive(Debug, Clone)]
pub struct SgdTrace {
    pub iterates: Vec<Vec<f64>>,
    pub gaps: Vec<f64>,
    pub pulls: Vec<Vec<u32>>,
    pub step_sizes: Vec<f64>,
    pub pseudo_regrets: Vec<f64>,
    pub step_violations: u32,
    pub first_violation: Option<StepViolation>,
}

/// One gradient step w - eta * g.
pub fn sgd_step(w: &[f64], gradient: &[f64], eta: f64) -> Result<Vec<f64>> {
    if gradient.len() != w.len() {
        return Err(Error::DimensionMismatch {
            context: "sgd step",
            expected: w.len(),
            got: gradient.len(),
        });
    }
    if !eta.is_finite() {
        return Err(Error::InvalidParameter {
            name: "eta",
            reason: format!("must be finite, got {eta}"),
        });
    }
    Ok(w.iter().zip(gradient).map(|(wi, gi)| wi - eta * gi).collect())
}

#[derive(Clone, Copy)]
enum Policy {
    Adaptive(TraceBoundPolicy),
    Pinned(usize),
}

/// K iterations of SGD with the adaptive selector producing each gradient
/// estimate from `params.rounds` pulls.
#[allow(clippy::too_many_arguments)]
pub fn run_ee_grad_sgd<R: Rng + ?Sized>(
    objective: &Objective,
    bank: &OracleBank,
    params: &EeGradParams,
    p_policy: TraceBoundPolicy,
    schedule: &StepSchedule,
    iterations: u32,
    check: StepSizeCheck,
    w_init: &[f64],
    rng: &mut R,
) -> Result<SgdTrace> {
    if let TraceBoundPolicy::PerIteration { margin } = p_policy {
        if !(margin >= 1.0) || !margin.is_finite() {
            return Err(Error::InvalidParameter {
                name: "p_margin",
                reason: format!("per-iteration trace bound needs margin >= 1, got {margin}"),
            });
        }
    }
    run_with_policy(
        objective,
        bank,
        params,
        schedule,
        iterations,
        check,
        w_init,
        rng,
        Policy::Adaptive(p_policy),
    )
}

/// Baseline: every round pulls the lowest-variance oracle, the estimate
/// averages its T draws, and the step-size bound uses sigma_*^2 / T in
/// place of the full inflation factor.
pub fn run_optimal_oracle_sgd<R: Rng + ?Sized>(
    objective: &Objective,
    bank: &OracleBank,
    params: &EeGradParams,
    schedule: &StepSchedule,
    iterations: u32,
    check: StepSizeCheck,
    w_init: &[f64],
    rng: &mut R,
) -> Result<SgdTrace> {
    run_fixed_oracle_sgd(
        objective,
        bank,
        params,
        bank.optimal_index(),
        schedule,
        iterations,
        check,
        w_init,
        rng,
    )
}

/// Comparison arm pinned to one oracle (1-based); the step-size bound
/// uses that oracle's sigma_n^2 / T.
#[allow(clippy::too_many_arguments)]
pub fn run_fixed_oracle_sgd<R: Rng + ?Sized>(
    objective: &Objective,
    bank: &OracleBank,
    params: &EeGradParams,
    oracle: usize,
    schedule: &StepSchedule,
    iterations: u32,
    check: StepSizeCheck,
    w_init: &[f64],
    rng: &mut R,
) -> Result<SgdTrace> {
    if oracle < 1 || oracle > bank.len() {
        return Err(Error::OracleIndexOutOfRange {
            index: oracle,
            max: bank.len(),
        });
    }
    run_with_policy(
        objective,
        bank,
        params,
        schedule,
        iterations,
        check,
        w_init,
        rng,
        Policy::Pinned(oracle),
    )
}

#[allow(clippy::too_many_arguments)]
fn run_with_policy<R: Rng + ?Sized>(
    objective: &Objective,
    bank: &OracleBank,
    params: &EeGradParams,
    schedule: &StepSchedule,
    iterations: u32,
    check: StepSizeCheck,
    w_init: &[f64],
    rng: &mut R,
    policy: Policy,
) -> Result<SgdTrace> {
    objective.validate()?;
    params.validate()?;
    schedule.validate(iterations)?;
    if objective.dim() != bank.dim() {
        return Err(Error::DimensionMismatch {
            context: "objective vs bank",
            expected: bank.dim(),
            got: objective.dim(),
        });
    }
    if w_init.len() != bank.dim() {
        return Err(Error::DimensionMismatch {
            context: "initial iterate",
            expected: bank.dim(),
            got: w_init.len(),
        });
    }
    if iterations == 0 {
        return Err(Error::InvalidParameter {
            name: "iterations",
            reason: "must be at least 1".into(),
        });
    }

    let t = params.rounds as f64;
    let mut w = w_init.to_vec();
    let mut trace = SgdTrace {
        iterates: vec![w.clone()],
        gaps: vec![objective.gap(&w)],
        pulls: Vec::with_capacity(iterations as usize),
        step_sizes: Vec::with_capacity(iterations as usize),
        pseudo_regrets: Vec::with_capacity(iterations as usize),
        step_violations: 0,
        first_violation: None,
    };

    for k in 0..iterations {
        let eta = schedule.at(k as usize);
        let iter_params = match policy {
            Policy::Adaptive(TraceBoundPolicy::PerIteration { margin }) => {
                let trace_s = bank.trace_s(&w)?;
                let mut p = params.clone();
                // A noiseless point gives exact estimates and no scale to
                // anchor to; the incoming bound is kept.
                if trace_s > 0.0 {
                    p.p_bound = margin * trace_s;
                }
                p
            }
            _ => params.clone(),
        };
        if check != StepSizeCheck::Off {
            let bound = match policy {
                Policy::Adaptive(_) => {
                    let trace_s = bank.trace_s(&w)?;
                    // A noiseless point makes the estimate exact; there is
                    // no variance-driven bound to enforce.
                    if trace_s > 0.0 {
                        let constants = gap_constants(bank.sigma_sq(), trace_s, &iter_params)?;
                        Some(2.0 / (objective.lipschitz * (1.0 + constants.z_t)))
                    } else {
                        None
                    }
                }
                Policy::Pinned(n) => {
                    let z = bank.sigma_sq()[n - 1] / t;
                    Some(2.0 / (objective.lipschitz * (1.0 + z)))
                }
            };
            if let Some(bound) = bound {
                if eta >= bound {
                    match check {
                        StepSizeCheck::Strict => {
                            return Err(Error::StepSizeRejected {
                                iteration: k + 1,
                                eta,
                                bound,
                            });
                        }
                        StepSizeCheck::Warn => {
                            trace.step_violations += 1;
                            trace.first_violation.get_or_insert(StepViolation {
                                iteration: k + 1,
                                eta,
                                bound,
                            });
                        }
                        StepSizeCheck::Off => unreachable!(),
                    }
                }
            }
        }

        let (gradient, pull_counts, pseudo_regret) = match policy {
            Policy::Adaptive(_) => {
                let out = run_iteration(bank, &w, &iter_params, rng)?;
                (out.gradient, out.pull_counts, out.pseudo_regret)
            }
            Policy::Pinned(n) => {
                let mut sum = vec![0.0; bank.dim()];
                for _ in 0..params.rounds {
                    let sample = bank.query(&w, n, rng)?;
                    for (acc, v) in sum.iter_mut().zip(&sample) {
                        *acc += v;
                    }
                }
                let gradient: Vec<f64> = sum.iter().map(|s| s / t).collect();
                let mut pull_counts = vec![0u32; bank.len()];
                pull_counts[n - 1] = params.rounds;
                let delta = bank.sigma_sq()[n - 1] - bank.sigma_star_sq();
                let pseudo_regret = t * delta * bank.trace_s(&w)?;
                (gradient, pull_counts, pseudo_regret)
            }
        };

        w = sgd_step(&w, &gradient, eta)?;
        trace.step_sizes.push(eta);
        trace.pulls.push(pull_counts);
        trace.pseudo_regrets.push(pseudo_regret);
        trace.iterates.push(w.clone());
        trace.gaps.push(objective.gap(&w));
    }

    Ok(trace)
}

/// Contraction factors predicted at `w`: assembles the inflation factor
/// from the bank's variances and noise-shape trace (equal to
/// ||grad F(w)||^2 under the squared-gradient shape), then applies the
/// strongly convex step analysis.
pub fn predicted_contraction(
    objective: &Objective,
    bank: &OracleBank,
    params: &EeGradParams,
    eta: f64,
    w: &[f64],
) -> Result<ContractionFactors> {
    objective.validate()?;
    let trace_s = bank.trace_s(w)?;
    if !(trace_s > 0.0) {
        return Err(Error::InvalidParameter {
            name: "w",
            reason: "noise-shape trace vanishes here; the prediction is undefined".into(),
        });
    }
    let constants = gap_constants(bank.sigma_sq(), trace_s, params)?;
    contraction_factors(
        eta,
        objective.strong_convexity,
        objective.lipschitz,
        constants.sigma_star_sq / params.rounds as f64,
        constants.z_t,
    )
}
