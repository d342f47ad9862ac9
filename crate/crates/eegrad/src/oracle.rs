//! Gradient oracle banks: where per-oracle variances come from (a fixed
//! list or a cost-fidelity budget split) and how samples are drawn.
//!
//! In the cost-fidelity model a budget B buys n draws of per-unit fidelity
//! theta_n, where theta_n solves n * cost(theta) + aggregation(n) = B.
//! Averaging the n draws gives variance factor sigma_n^2 = 1 / (n theta_n),
//! so oracle n literally is "mini-batch size n". Oracles are therefore
//! numbered 1..=N throughout.

use crate::error::{Error, Result};
use crate::math::GAP_TOLERANCE;
use rand::Rng;
use rand_distr::StandardNormal;
use std::fmt;
use std::sync::Arc;

/// Scan limit used to decide that a feasible set has no natural bound.
const FEASIBILITY_SCAN_CAP: u32 = 1 << 20;

/// Relative tolerance of the bisection fallback for custom cost inverses.
const BISECTION_TOLERANCE: f64 = 1e-12;

type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type VectorMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Strictly increasing per-unit cost as a function of fidelity theta.
#[derive(Clone)]
pub enum CostFunction {
    /// cost(theta) = scale * theta
    Linear { scale: f64 },
    /// cost(theta) = scale * theta^exponent
    Power { scale: f64, exponent: f64 },
    /// Any strictly increasing map with the given limit at theta -> 0;
    /// inverted by bisection.
    Custom { cost: ScalarMap, floor: f64 },
}

impl fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { scale } => write!(f, "Linear {{ scale: {scale} }}"),
            Self::Power { scale, exponent } => {
                write!(f, "Power {{ scale: {scale}, exponent: {exponent} }}")
            }
            Self::Custom { floor, .. } => write!(f, "Custom {{ floor: {floor} }}"),
        }
    }
}

/// Extra cost of combining n draws into one estimate. Nondecreasing in n
/// with no cost for a single draw.
#[derive(Clone)]
pub enum AggregationCost {
    None,
    /// rate * (n - 1)
    PerUnit { rate: f64 },
    Custom(Arc<dyn Fn(u32) -> f64 + Send + Sync>),
}

impl fmt::Debug for AggregationCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => write!(f, "None"),
            Self::PerUnit { rate } => write!(f, "PerUnit {{ rate: {rate} }}"),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Budget split across batch size and per-draw fidelity.
#[derive(Debug, Clone)]
pub struct CostModel {
    pub cost: CostFunction,
    pub aggregation: AggregationCost,
    pub budget: f64,
    /// Hard upper bound on batch size. Required when the cost floor is
    /// zero and aggregation never exhausts the budget.
    pub batch_cap: Option<u32>,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.budget > 0.0) || !self.budget.is_finite() {
            return Err(Error::InvalidParameter {
                name: "budget",
                reason: format!("must be finite and positive, got {}", self.budget),
            });
        }
        match &self.cost {
            CostFunction::Linear { scale } => {
                if !(*scale > 0.0) || !scale.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "cost.scale",
                        reason: format!("must be finite and positive, got {scale}"),
                    });
                }
            }
            CostFunction::Power { scale, exponent } => {
                if !(*scale > 0.0) || !scale.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "cost.scale",
                        reason: format!("must be finite and positive, got {scale}"),
                    });
                }
                if !(*exponent > 0.0) || !exponent.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "cost.exponent",
                        reason: format!("must be finite and positive, got {exponent}"),
                    });
                }
            }
            CostFunction::Custom { floor, .. } => {
                if !(*floor >= 0.0) || !floor.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "cost.floor",
                        reason: format!("must be finite and nonnegative, got {floor}"),
                    });
                }
            }
        }
        if let AggregationCost::PerUnit { rate } = &self.aggregation {
            if !(*rate >= 0.0) || !rate.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "aggregation.rate",
                    reason: format!("must be finite and nonnegative, got {rate}"),
                });
            }
        }
        if let Some(cap) = self.batch_cap {
            if cap == 0 {
                return Err(Error::InvalidParameter {
                    name: "batch_cap",
                    reason: "must be at least 1".into(),
                });
            }
        }
        Ok(())
    }

    /// Limit of the cost function at zero fidelity.
    pub fn cost_floor(&self) -> f64 {
        match &self.cost {
            CostFunction::Linear { .. } | CostFunction::Power { .. } => 0.0,
            CostFunction::Custom { floor, .. } => *floor,
        }
    }

    pub fn aggregation_cost(&self, n: u32) -> f64 {
        match &self.aggregation {
            AggregationCost::None => 0.0,
            AggregationCost::PerUnit { rate } => rate * (n as f64 - 1.0),
            AggregationCost::Custom(f) => f(n),
        }
    }

    fn is_feasible(&self, n: u32) -> bool {
        let within_cap = self.batch_cap.map_or(true, |cap| n <= cap);
        within_cap && self.budget > n as f64 * self.cost_floor() + self.aggregation_cost(n)
    }

    /// Largest n whose total floor cost stays below the budget. Feasibility
    /// is prefix-closed because the total floor cost is nondecreasing in n.
    pub fn max_feasible_batch(&self) -> Result<u32> {
        self.validate()?;
        if !self.is_feasible(1) {
            return Err(Error::NoFeasibleOracle {
                budget: self.budget,
                floor: self.cost_floor() + self.aggregation_cost(1),
            });
        }
        let scan_cap = self.batch_cap.unwrap_or(FEASIBILITY_SCAN_CAP);
        let mut n = 1;
        while n < scan_cap && self.is_feasible(n + 1) {
            n += 1;
        }
        if self.batch_cap.is_none() && n == FEASIBILITY_SCAN_CAP {
            return Err(Error::UnboundedFeasibleSet { probed: n });
        }
        Ok(n)
    }

    /// Fidelity whose per-unit cost equals `y`. Analytic for the built-in
    /// families, bisection with geometric bracket growth otherwise.
    pub fn inverse_cost(&self, y: f64) -> Result<f64> {
        self.validate()?;
        if !(y > self.cost_floor()) || !y.is_finite() {
            return Err(Error::InvalidParameter {
                name: "per_unit_cost",
                reason: format!(
                    "must exceed the cost floor {}, got {y}",
                    self.cost_floor()
                ),
            });
        }
        match &self.cost {
            CostFunction::Linear { scale } => Ok(y / scale),
            CostFunction::Power { scale, exponent } => Ok((y / scale).powf(1.0 / exponent)),
            CostFunction::Custom { cost, .. } => Ok(invert_monotone(cost.as_ref(), y)),
        }
    }

    /// Variance factor sigma_n^2 = 1 / (n theta_n) of the size-n oracle.
    pub fn sigma_sq(&self, n: u32) -> Result<f64> {
        self.validate()?;
        if n == 0 || !self.is_feasible(n) {
            let max = self.max_feasible_batch().unwrap_or(0);
            return Err(Error::OracleIndexOutOfRange {
                index: n as usize,
                max: max as usize,
            });
        }
        let per_unit = (self.budget - self.aggregation_cost(n)) / n as f64;
        let theta = self.inverse_cost(per_unit)?;
        Ok(1.0 / (n as f64 * theta))
    }
}

fn invert_monotone(cost: &(dyn Fn(f64) -> f64 + Send + Sync), y: f64) -> f64 {
    let mut hi = 1.0f64;
    let mut growth = 0;
    while cost(hi) < y && growth < 200 {
        hi *= 2.0;
        growth += 1;
    }
    let mut lo = 0.0f64;
    let mut iterations = 0;
    while hi - lo > BISECTION_TOLERANCE * hi.max(1.0) && iterations < 10_000 {
        let mid = 0.5 * (lo + hi);
        if cost(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    0.5 * (lo + hi)
}

/// Diagonal of the noise covariance shape M(w).
#[derive(Clone)]
pub enum NoiseShape {
    /// diag M(w) = (grad F(w)_i)^2, so the trace S(w) = ||grad F(w)||^2.
    SquaredGradient,
    /// Constant diagonal, independent of w.
    Fixed(Vec<f64>),
    Custom(VectorMap),
}

impl fmt::Debug for NoiseShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SquaredGradient => write!(f, "SquaredGradient"),
            Self::Fixed(d) => write!(f, "Fixed({d:?})"),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// A family of N unbiased gradient oracles over a shared mean map, where
/// oracle n adds Gaussian noise with covariance sigma_n^2 * M(w).
#[derive(Clone)]
pub struct OracleBank {
    gradient: VectorMap,
    noise: NoiseShape,
    sigma_sq: Vec<f64>,
    dim: usize,
}

impl fmt::Debug for OracleBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleBank")
            .field("noise", &self.noise)
            .field("sigma_sq", &self.sigma_sq)
            .field("dim", &self.dim)
            .finish()
    }
}

/// One oracle response inside a selection loop.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub value: Vec<f64>,
    /// 1-based oracle index.
    pub oracle: usize,
    /// 1-based round the sample was drawn at.
    pub round: u32,
}

impl OracleBank {
    /// Bank over an explicit variance list. Zero entries are allowed and
    /// mean a noiseless oracle (the sigma -> 0 limit).
    pub fn direct(
        gradient: VectorMap,
        noise: NoiseShape,
        sigma_sq: Vec<f64>,
        dim: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "must be at least 1".into(),
            });
        }
        if sigma_sq.is_empty() {
            return Err(Error::InvalidParameter {
                name: "sigma_sq",
                reason: "variance list must be nonempty".into(),
            });
        }
        for (i, s) in sigma_sq.iter().enumerate() {
            if !(*s >= 0.0) || !s.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "sigma_sq",
                    reason: format!("variance {s} (index {i}) must be finite and nonnegative"),
                });
            }
        }
        if let NoiseShape::Fixed(diag) = &noise {
            if diag.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "noise shape diagonal",
                    expected: dim,
                    got: diag.len(),
                });
            }
        }
        Ok(Self {
            gradient,
            noise,
            sigma_sq,
            dim,
        })
    }

    /// Bank with one oracle per feasible batch size of `model`, so oracle
    /// n has variance `model.sigma_sq(n)`.
    pub fn from_cost_model(
        gradient: VectorMap,
        noise: NoiseShape,
        model: &CostModel,
        dim: usize,
    ) -> Result<Self> {
        let n_max = model.max_feasible_batch()?;
        let sigma_sq = (1..=n_max)
            .map(|n| model.sigma_sq(n))
            .collect::<Result<Vec<_>>>()?;
        Self::direct(gradient, noise, sigma_sq, dim)
    }

    pub fn len(&self) -> usize {
        self.sigma_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma_sq(&self) -> &[f64] {
        &self.sigma_sq
    }

    pub fn sigma_star_sq(&self) -> f64 {
        self.sigma_sq.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// 1-based index of the lowest-variance oracle, lowest index on ties.
    pub fn optimal_index(&self) -> usize {
        let star = self.sigma_star_sq();
        self.sigma_sq
            .iter()
            .position(|s| (s - star).abs() <= GAP_TOLERANCE)
            .expect("bank is nonempty")
            + 1
    }

    /// Bank with every variance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::InvalidParameter {
                name: "scale_factor",
                reason: format!("must be finite and positive, got {factor}"),
            });
        }
        let mut bank = self.clone();
        for s in &mut bank.sigma_sq {
            *s *= factor;
        }
        Ok(bank)
    }

    pub fn mean_gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "oracle query point",
                expected: self.dim,
                got: w.len(),
            });
        }
        let grad = (self.gradient)(w);
        if grad.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "gradient map output",
                expected: self.dim,
                got: grad.len(),
            });
        }
        Ok(grad)
    }

    fn noise_diag_for(&self, grad: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let diag = match &self.noise {
            NoiseShape::SquaredGradient => grad.iter().map(|g| g * g).collect(),
            NoiseShape::Fixed(d) => d.clone(),
            NoiseShape::Custom(f) => f(w),
        };
        if diag.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "noise shape diagonal",
                expected: self.dim,
                got: diag.len(),
            });
        }
        for v in &diag {
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "noise_diag",
                    reason: format!("entries must be finite and nonnegative, got {v}"),
                });
            }
        }
        Ok(diag)
    }

    /// Diagonal of M(w).
    pub fn noise_diag(&self, w: &[f64]) -> Result<Vec<f64>> {
        let grad = self.mean_gradient(w)?;
        self.noise_diag_for(&grad, w)
    }

    /// Noise-shape trace S(w) = tr M(w).
    pub fn trace_s(&self, w: &[f64]) -> Result<f64> {
        Ok(self.noise_diag(w)?.iter().sum())
    }

    /// One draw from oracle `oracle` (1-based) at `w`. The sample is drawn
    /// in one shot from the aggregate law N(grad F(w), sigma_n^2 M(w)) in
    /// both bank modes; exactly `dim` normals are consumed per call, so
    /// streams stay aligned across oracle choices.
    pub fn query<R: Rng + ?Sized>(&self, w: &[f64], oracle: usize, rng: &mut R) -> Result<Vec<f64>> {
        if oracle < 1 || oracle > self.sigma_sq.len() {
            return Err(Error::OracleIndexOutOfRange {
                index: oracle,
                max: self.sigma_sq.len(),
            });
        }
        let mut out = self.mean_gradient(w)?;
        let diag = self.noise_diag_for(&out, w)?;
        let sigma_sq = self.sigma_sq[oracle - 1];
        for (v, m) in out.iter_mut().zip(&diag) {
            let z: f64 = rng.sample(StandardNormal);
            *v += (sigma_sq * m).sqrt() * z;
        }
        Ok(out)
    }
}
