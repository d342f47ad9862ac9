//! Closed-form pieces of the selection rule and its guarantees: the
//! confidence radius and its exact inverse, the variance-inflation
//! constants of the averaged gradient estimate, per-step contraction
//! factors for strongly convex SGD, and the explicit quadratic form that
//! the streaming covariance-trace statistic must reproduce.

use crate::error::{Error, Result};
use serde::Serialize;

/// Gaps smaller than this are treated as zero: the oracle counts as
/// optimal and contributes nothing to the inflation constants.
pub const GAP_TOLERANCE: f64 = 1e-12;

/// Cap on `gamma * d` for the explicit quadratic-form reference path.
pub const QUADRATIC_FORM_CAP: usize = 10_000;

/// Knobs shared by the selection rule and the bound calculators.
///
/// `beta` bounds every oracle variance from above and `p_bound` bounds the
/// noise-shape trace S(w) over the run; both enter the confidence radius
/// only through their product. `c_const` is the absolute constant of the
/// concentration inequality the radius is derived from, exposed as a knob
/// because its true value is not computable in practice. `rounds` is the
/// per-estimate pull budget T.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EeGradParams {
    pub alpha: f64,
    pub beta: f64,
    pub p_bound: f64,
    pub c_const: f64,
    pub dim: usize,
    pub rounds: u32,
}

impl EeGradParams {
    pub fn new(
        alpha: f64,
        beta: f64,
        p_bound: f64,
        c_const: f64,
        dim: usize,
        rounds: u32,
    ) -> Result<Self> {
        let params = Self {
            alpha,
            beta,
            p_bound,
            c_const,
            dim,
            rounds,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 2.0) || !self.alpha.is_finite() {
            return Err(invalid("alpha", format!("must be finite and > 2, got {}", self.alpha)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(invalid("beta", format!("must be finite and positive, got {}", self.beta)));
        }
        if !(self.p_bound > 0.0) || !self.p_bound.is_finite() {
            return Err(invalid(
                "p_bound",
                format!("must be finite and positive, got {}", self.p_bound),
            ));
        }
        if !(self.c_const > 0.0) || !self.c_const.is_finite() {
            return Err(invalid(
                "c_const",
                format!("must be finite and positive, got {}", self.c_const),
            ));
        }
        if self.dim == 0 {
            return Err(invalid("dim", "must be at least 1".into()));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be at least 1".into()));
        }
        Ok(())
    }
}

fn invalid(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.to_string(),
    }
}

/// Confidence radius
/// `f(x) = beta * p_bound * sqrt(x d / c) * max(1, sqrt(x / (c d)))`.
///
/// Below `x = c d` the radius grows like sqrt(x) (heavy-tailed regime of
/// the underlying deviation bound), above it the radius is linear in x.
/// Strictly increasing with f(0) = 0.
pub fn conf_radius(x: f64, params: &EeGradParams) -> Result<f64> {
    params.validate()?;
    if !(x >= 0.0) {
        return Err(invalid("x", format!("must be nonnegative, got {x}")));
    }
    let d = params.dim as f64;
    let c = params.c_const;
    let scale = params.beta * params.p_bound;
    Ok(scale * (x * d / c).sqrt() * (x / (c * d)).sqrt().max(1.0))
}

/// Exact inverse of [`conf_radius`]:
/// `phi(eps) = (c eps / (beta p_bound)) * min(1, (eps / d) / (beta p_bound))`,
/// so `phi(f(x)) = x` for every x >= 0 with the same parameters.
pub fn conf_radius_inverse(eps: f64, params: &EeGradParams) -> Result<f64> {
    params.validate()?;
    if !(eps >= 0.0) {
        return Err(invalid("eps", format!("must be nonnegative, got {eps}")));
    }
    let d = params.dim as f64;
    let c = params.c_const;
    let scale = params.beta * params.p_bound;
    Ok((c * eps / scale) * ((eps / d) / scale).min(1.0))
}

/// Variance-inflation constants for a bank of oracle variances evaluated
/// where the noise-shape trace is `trace_s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapConstants {
    /// Smallest variance in the bank.
    pub sigma_star_sq: f64,
    /// Per-oracle gaps sigma_n^2 - sigma_*^2, in bank order.
    pub deltas: Vec<f64>,
    /// Coefficient of the ln(T)/T^2 term.
    pub c1: f64,
    /// Coefficient of the 1/T^2 term.
    pub c2: f64,
    /// sigma_*^2 / T + ln(T) C1 / T^2 + C2 / T^2.
    pub z_t: f64,
}

/// Assembles [`GapConstants`] for the given variances. Oracles whose gap
/// falls below [`GAP_TOLERANCE`] are excluded from the C1 sum.
pub fn gap_constants(sigmas: &[f64], trace_s: f64, params: &EeGradParams) -> Result<GapConstants> {
    params.validate()?;
    if sigmas.is_empty() {
        return Err(invalid("sigmas", "variance list must be nonempty".into()));
    }
    for (i, s) in sigmas.iter().enumerate() {
        if !(*s >= 0.0) || !s.is_finite() {
            return Err(invalid(
                "sigmas",
                format!("variance {} (index {i}) must be finite and nonnegative", s),
            ));
        }
    }
    if !(trace_s > 0.0) || !trace_s.is_finite() {
        return Err(invalid(
            "trace_s",
            format!("must be finite and positive, got {trace_s}"),
        ));
    }
    let sigma_star_sq = sigmas.iter().cloned().fold(f64::INFINITY, f64::min);
    let deltas: Vec<f64> = sigmas.iter().map(|s| s - sigma_star_sq).collect();

    let mut c1 = 0.0;
    let mut delta_sum = 0.0;
    for &delta in &deltas {
        if delta <= GAP_TOLERANCE {
            continue;
        }
        delta_sum += delta;
        let phi = conf_radius_inverse(delta * trace_s / 2.0, params)?;
        c1 += params.alpha * delta / phi;
    }
    let c2 = delta_sum * 2.0 * (params.alpha - 1.0) / (params.alpha - 2.0);

    let t = params.rounds as f64;
    let z_t = sigma_star_sq / t + t.ln() * c1 / (t * t) + c2 / (t * t);
    Ok(GapConstants {
        sigma_star_sq,
        deltas,
        c1,
        c2,
        z_t,
    })
}

/// Per-step contraction factors of the expected optimality gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionFactors {
    /// Factor when every pull goes to the best oracle.
    pub tau_opt: f64,
    /// Factor for the adaptive estimate; always `tau_opt + overhead`.
    pub tau_alg: f64,
    /// Selection overhead m L eta^2 (Z_T - sigma_*^2 / T).
    pub overhead: f64,
}

/// Contraction factors for strongly convex SGD with an averaged-oracle
/// gradient estimate. `sigma_star_sq_over_t` is the best oracle's variance
/// already divided by the round budget, `z_t` the full inflation factor
/// (so `z_t >= sigma_star_sq_over_t`). The step size must satisfy
/// `0 < eta < 2 / (L (1 + z_t))`.
pub fn contraction_factors(
    eta: f64,
    strong_convexity: f64,
    lipschitz: f64,
    sigma_star_sq_over_t: f64,
    z_t: f64,
) -> Result<ContractionFactors> {
    if !(strong_convexity > 0.0) || !strong_convexity.is_finite() {
        return Err(invalid(
            "strong_convexity",
            format!("must be finite and positive, got {strong_convexity}"),
        ));
    }
    if !(lipschitz > 0.0) || !lipschitz.is_finite() {
        return Err(invalid(
            "lipschitz",
            format!("must be finite and positive, got {lipschitz}"),
        ));
    }
    if !(sigma_star_sq_over_t >= 0.0) {
        return Err(invalid(
            "sigma_star_sq_over_t",
            format!("must be nonnegative, got {sigma_star_sq_over_t}"),
        ));
    }
    if !(z_t >= sigma_star_sq_over_t - GAP_TOLERANCE) {
        return Err(invalid(
            "z_t",
            format!("must be at least sigma_*^2/T = {sigma_star_sq_over_t}, got {z_t}"),
        ));
    }
    let bound = 2.0 / (lipschitz * (1.0 + z_t));
    if !(eta > 0.0 && eta < bound) {
        return Err(Error::StepSizeOutOfRange { eta, bound });
    }
    let m = strong_convexity;
    let l = lipschitz;
    let tau_opt = m * l * eta * eta * (1.0 + sigma_star_sq_over_t) - 2.0 * m * eta + 1.0;
    let overhead = m * l * eta * eta * (z_t - sigma_star_sq_over_t);
    Ok(ContractionFactors {
        tau_opt,
        tau_alg: tau_opt + overhead,
        overhead,
    })
}

/// Trace of the sample covariance of `samples`, written as the quadratic
/// form s' A s over the stacked vector s, with
/// `A = (I - E/gamma) / (gamma - 1)` and E the gamma x gamma grid of d x d
/// identity blocks. Reference path for verifying the streaming statistic;
/// quadratic in `gamma * d`, which is capped at [`QUADRATIC_FORM_CAP`].
pub fn quadratic_form_trace(samples: &[Vec<f64>]) -> Result<f64> {
    let gamma = samples.len();
    if gamma < 2 {
        return Err(Error::TooFewSamples { got: gamma });
    }
    let d = samples[0].len();
    if d == 0 {
        return Err(invalid("samples", "sample dimension must be at least 1".into()));
    }
    for row in samples {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                context: "quadratic_form_trace",
                expected: d,
                got: row.len(),
            });
        }
    }
    let n = gamma * d;
    if n > QUADRATIC_FORM_CAP {
        return Err(Error::SizeCapExceeded {
            size: n,
            cap: QUADRATIC_FORM_CAP,
        });
    }
    let s: Vec<f64> = samples.concat();
    let g = gamma as f64;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            // E has an identity block at every block position, so its
            // (i, j) entry only checks the within-block coordinate.
            let e = if i % d == j % d { 1.0 } else { 0.0 };
            let eye = if i == j { 1.0 } else { 0.0 };
            total += s[i] * ((eye - e / g) / (g - 1.0)) * s[j];
        }
    }
    Ok(total)
}

/// The matrix of [`quadratic_form_trace`] materialized explicitly, row
/// major. Intended for small verification cases; capped at
/// `gamma * d <= 1024`.
pub fn centering_matrix(gamma: usize, d: usize) -> Result<Vec<Vec<f64>>> {
    if gamma < 2 {
        return Err(invalid("gamma", format!("must be at least 2, got {gamma}")));
    }
    if d == 0 {
        return Err(invalid("d", "must be at least 1".into()));
    }
    let n = gamma * d;
    if n > 1024 {
        return Err(Error::SizeCapExceeded { size: n, cap: 1024 });
    }
    let g = gamma as f64;
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let e = if i % d == j % d { 1.0 } else { 0.0 };
            let eye = if i == j { 1.0 } else { 0.0 };
            a[i][j] = (eye - e / g) / (g - 1.0);
        }
    }
    Ok(a)
}

/// Frobenius norm squared and operator norm of the centering matrix:
/// `(d / (gamma - 1), 1 / (gamma - 1))` in closed form.
pub fn block_matrix_norms(gamma: usize, d: usize) -> Result<(f64, f64)> {
    if gamma < 2 {
        return Err(invalid("gamma", format!("must be at least 2, got {gamma}")));
    }
    if d == 0 {
        return Err(invalid("d", "must be at least 1".into()));
    }
    let g = gamma as f64;
    Ok((d as f64 / (g - 1.0), 1.0 / (g - 1.0)))
}

/// Pull-count threshold beyond which an oracle with gap `delta_n` stops
/// being selected outside the deviation event:
/// `ceil(alpha ln(T) / phi(delta_n trace_s / 2))`. Needs T >= 2.
pub fn regret_threshold(delta_n: f64, trace_s: f64, params: &EeGradParams) -> Result<u64> {
    params.validate()?;
    if !(delta_n > 0.0) || !delta_n.is_finite() {
        return Err(invalid(
            "delta_n",
            format!("must be finite and positive, got {delta_n}"),
        ));
    }
    if !(trace_s > 0.0) || !trace_s.is_finite() {
        return Err(invalid(
            "trace_s",
            format!("must be finite and positive, got {trace_s}"),
        ));
    }
    if params.rounds < 2 {
        return Err(invalid("rounds", "threshold needs at least 2 rounds".into()));
    }
    let phi = conf_radius_inverse(delta_n * trace_s / 2.0, params)?;
    let t = params.rounds as f64;
    Ok((params.alpha * t.ln() / phi).ceil() as u64)
}
