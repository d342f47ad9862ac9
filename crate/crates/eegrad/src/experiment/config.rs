//! Declarative experiment configuration: TOML schema, strict validation
//! with individually named fields, and builders for the objective, the
//! oracle bank, and the per-run selector parameters.

use crate::error::{Error, Result};
use crate::math::EeGradParams;
use crate::oracle::{AggregationCost, CostFunction, CostModel, NoiseShape, OracleBank};
use crate::sgd::{Objective, StepSchedule, StepSizeCheck, TraceBoundPolicy};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn config_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config(format!("{field}: {}", reason.into()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub objective: ObjectiveConfig,
    pub bank: BankConfig,
    #[serde(default)]
    pub sigma_scaling: SigmaScaling,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    pub trials_t: Vec<u32>,
    pub iterations: u32,
    pub step_size: StepSizeConfig,
    pub realizations: u32,
    pub base_seed: u64,
    #[serde(default)]
    pub comparison_arms: bool,
    pub output_dir: PathBuf,
    #[serde(default = "default_init_radius")]
    pub init_radius: f64,
    #[serde(default)]
    pub step_check: StepCheckConfig,
    #[serde(default)]
    pub common_seed: bool,
}

fn default_init_radius() -> f64 {
    5.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub name: String,
}

/// Bank declaration. `mode` selects which of the remaining fields are
/// legal; the split is validated manually so that every misplaced field
/// is reported by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankConfig {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_sq: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<AggregationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_cap: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub family: String,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregationConfig {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

/// Maps base variances and T to effective variances. `proportional`
/// keeps sigma^2 / T constant relative to `t_ref`; `table` supplies an
/// explicit multiplier per T.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaScaling {
    #[serde(default = "default_scaling_rule")]
    pub rule: String,
    #[serde(default = "default_t_ref")]
    pub t_ref: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<ScalingEntry>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingEntry {
    pub t: u32,
    pub factor: f64,
}

fn default_scaling_rule() -> String {
    "proportional".into()
}

fn default_t_ref() -> u32 {
    50
}

impl Default for SigmaScaling {
    fn default() -> Self {
        Self {
            rule: default_scaling_rule(),
            t_ref: default_t_ref(),
            table: None,
        }
    }
}

/// Selector parameters. `beta` and `p_bound` are absolute values;
/// `beta_margin` derives beta as margin times the largest effective
/// variance, and `p_margin` derives the trace bound as margin times the
/// noise-shape trace at the initial iterate. Each pair is exclusive;
/// when neither member is given the margins default to 1.2 and 2.0.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_margin: Option<f64>,
    /// "run" keeps one P for the whole trajectory; "iteration" re-anchors
    /// P to margin * S(w_k) at each SGD iteration.
    #[serde(default = "default_p_scope")]
    pub p_scope: String,
    #[serde(default = "default_c_const")]
    pub c_const: f64,
}

fn default_p_scope() -> String {
    "run".into()
}

fn default_alpha() -> f64 {
    3.0
}

fn default_c_const() -> f64 {
    1.0
}

const DEFAULT_BETA_MARGIN: f64 = 1.2;
const DEFAULT_P_MARGIN: f64 = 2.0;

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta: None,
            beta_margin: None,
            p_bound: None,
            p_margin: None,
            p_scope: default_p_scope(),
            c_const: default_c_const(),
        }
    }
}

impl AlgorithmConfig {
    pub fn resolved_beta(&self, max_sigma_sq: f64) -> f64 {
        match (self.beta, self.beta_margin) {
            (Some(beta), _) => beta,
            (None, Some(margin)) => margin * max_sigma_sq,
            (None, None) => DEFAULT_BETA_MARGIN * max_sigma_sq,
        }
    }

    pub fn resolved_p(&self, trace_s_init: f64) -> f64 {
        match (self.p_bound, self.p_margin) {
            (Some(p), _) => p,
            (None, Some(margin)) => margin * trace_s_init,
            (None, None) => DEFAULT_P_MARGIN * trace_s_init,
        }
    }

    pub fn trace_bound_policy(&self) -> TraceBoundPolicy {
        match self.p_scope.as_str() {
            "iteration" => TraceBoundPolicy::PerIteration {
                margin: self.p_margin.unwrap_or(DEFAULT_P_MARGIN),
            },
            _ => TraceBoundPolicy::Fixed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSizeConfig {
    Constant(f64),
    PerIteration(Vec<f64>),
}

impl StepSizeConfig {
    pub fn to_schedule(&self) -> StepSchedule {
        match self {
            Self::Constant(eta) => StepSchedule::Constant(*eta),
            Self::PerIteration(etas) => StepSchedule::PerIteration(etas.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepCheckConfig {
    Strict,
    #[default]
    Warn,
    Off,
}

impl StepCheckConfig {
    pub fn to_check(self) -> StepSizeCheck {
        match self {
            Self::Strict => StepSizeCheck::Strict,
            Self::Warn => StepSizeCheck::Warn,
            Self::Off => StepSizeCheck::Off,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Canonical serialization of the resolved config; hashed into the
    /// run manifest.
    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(config_err("dim", "must be at least 1"));
        }
        if self.objective.name != "quadratic" {
            return Err(config_err(
                "objective.name",
                format!("unknown objective '{}'; built-ins: quadratic", self.objective.name),
            ));
        }
        self.validate_bank()?;
        self.validate_scaling()?;
        self.validate_algorithm()?;

        if self.trials_t.is_empty() {
            return Err(config_err("trials_t", "must list at least one T"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &t in &self.trials_t {
            if !seen.insert(t) {
                return Err(config_err("trials_t", format!("duplicate entry {t}")));
            }
        }
        let bank = self.build_bank(1.0)?;
        let minimum = 2 * bank.len() as u32 + 1;
        for &t in &self.trials_t {
            if t < minimum {
                return Err(config_err(
                    "trials_t",
                    format!(
                        "T = {t} is below 2N+1 = {minimum} for the {}-oracle bank",
                        bank.len()
                    ),
                ));
            }
        }
        if self.iterations == 0 {
            return Err(config_err("iterations", "must be at least 1"));
        }
        self.step_size
            .to_schedule()
            .validate(self.iterations)
            .map_err(|e| config_err("step_size", e.to_string()))?;
        if self.realizations == 0 {
            return Err(config_err("realizations", "must be at least 1"));
        }
        if !(self.init_radius > 0.0) || !self.init_radius.is_finite() {
            return Err(config_err("init_radius", "must be finite and positive"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(config_err("output_dir", "must not be empty"));
        }
        Ok(())
    }

    fn validate_bank(&self) -> Result<()> {
        let b = &self.bank;
        match b.mode.as_str() {
            "direct" => {
                let sigma = b
                    .sigma_sq
                    .as_ref()
                    .ok_or_else(|| config_err("bank.sigma_sq", "required when mode = \"direct\""))?;
                if sigma.is_empty() {
                    return Err(config_err("bank.sigma_sq", "must list at least one variance"));
                }
                for (i, &s) in sigma.iter().enumerate() {
                    if !(s >= 0.0) || !s.is_finite() {
                        return Err(config_err(
                            "bank.sigma_sq",
                            format!("entry {} must be finite and nonnegative, got {s}", i + 1),
                        ));
                    }
                }
                for (name, present) in [
                    ("bank.budget", b.budget.is_some()),
                    ("bank.cost", b.cost.is_some()),
                    ("bank.aggregation", b.aggregation.is_some()),
                    ("bank.batch_cap", b.batch_cap.is_some()),
                ] {
                    if present {
                        return Err(config_err(name, "not allowed when mode = \"direct\""));
                    }
                }
            }
            "cost_fidelity" => {
                if b.sigma_sq.is_some() {
                    return Err(config_err(
                        "bank.sigma_sq",
                        "not allowed when mode = \"cost_fidelity\"",
                    ));
                }
                let budget = b
                    .budget
                    .ok_or_else(|| config_err("bank.budget", "required when mode = \"cost_fidelity\""))?;
                if !(budget > 0.0) || !budget.is_finite() {
                    return Err(config_err("bank.budget", "must be finite and positive"));
                }
                let cost = b
                    .cost
                    .as_ref()
                    .ok_or_else(|| config_err("bank.cost", "required when mode = \"cost_fidelity\""))?;
                if !(cost.scale > 0.0) || !cost.scale.is_finite() {
                    return Err(config_err("bank.cost.scale", "must be finite and positive"));
                }
                match cost.family.as_str() {
                    "linear" => {
                        if cost.exponent.is_some() {
                            return Err(config_err(
                                "bank.cost.exponent",
                                "not allowed for the linear family",
                            ));
                        }
                    }
                    "power" => {
                        let exponent = cost.exponent.ok_or_else(|| {
                            config_err("bank.cost.exponent", "required for the power family")
                        })?;
                        if !(exponent >= 1.0) || !exponent.is_finite() {
                            return Err(config_err("bank.cost.exponent", "must be at least 1"));
                        }
                    }
                    other => {
                        return Err(config_err(
                            "bank.cost.family",
                            format!("unknown family '{other}'; expected linear or power"),
                        ));
                    }
                }
                if let Some(agg) = &b.aggregation {
                    match agg.family.as_str() {
                        "none" => {
                            if agg.rate.is_some() {
                                return Err(config_err(
                                    "bank.aggregation.rate",
                                    "not allowed for family = \"none\"",
                                ));
                            }
                        }
                        "per_unit" => {
                            let rate = agg.rate.ok_or_else(|| {
                                config_err(
                                    "bank.aggregation.rate",
                                    "required for family = \"per_unit\"",
                                )
                            })?;
                            if !(rate >= 0.0) || !rate.is_finite() {
                                return Err(config_err(
                                    "bank.aggregation.rate",
                                    "must be finite and nonnegative",
                                ));
                            }
                        }
                        other => {
                            return Err(config_err(
                                "bank.aggregation.family",
                                format!("unknown family '{other}'; expected none or per_unit"),
                            ));
                        }
                    }
                }
            }
            other => {
                return Err(config_err(
                    "bank.mode",
                    format!("unknown mode '{other}'; expected direct or cost_fidelity"),
                ));
            }
        }
        Ok(())
    }

    fn validate_scaling(&self) -> Result<()> {
        let s = &self.sigma_scaling;
        match s.rule.as_str() {
            "proportional" => {
                if s.t_ref == 0 {
                    return Err(config_err("sigma_scaling.t_ref", "must be at least 1"));
                }
                if s.table.is_some() {
                    return Err(config_err(
                        "sigma_scaling.table",
                        "only allowed for rule = \"table\"",
                    ));
                }
            }
            "none" => {
                if s.table.is_some() {
                    return Err(config_err(
                        "sigma_scaling.table",
                        "only allowed for rule = \"table\"",
                    ));
                }
            }
            "table" => {
                let table = s.table.as_ref().ok_or_else(|| {
                    config_err("sigma_scaling.table", "required for rule = \"table\"")
                })?;
                for entry in table {
                    if !(entry.factor > 0.0) || !entry.factor.is_finite() {
                        return Err(config_err(
                            "sigma_scaling.table",
                            format!("factor for T = {} must be finite and positive", entry.t),
                        ));
                    }
                }
                for &t in &self.trials_t {
                    if !table.iter().any(|e| e.t == t) {
                        return Err(config_err(
                            "sigma_scaling.table",
                            format!("missing an entry for T = {t}"),
                        ));
                    }
                }
            }
            other => {
                return Err(config_err(
                    "sigma_scaling.rule",
                    format!("unknown rule '{other}'; expected proportional, none, or table"),
                ));
            }
        }
        Ok(())
    }

    fn validate_algorithm(&self) -> Result<()> {
        let a = &self.algorithm;
        if !(a.alpha > 2.0) || !a.alpha.is_finite() {
            return Err(config_err("algorithm.alpha", "must be finite and greater than 2"));
        }
        if a.beta.is_some() && a.beta_margin.is_some() {
            return Err(config_err(
                "algorithm.beta_margin",
                "exclusive with algorithm.beta; set only one",
            ));
        }
        if a.p_bound.is_some() && a.p_margin.is_some() {
            return Err(config_err(
                "algorithm.p_margin",
                "exclusive with algorithm.p_bound; set only one",
            ));
        }
        match a.p_scope.as_str() {
            "run" => {}
            "iteration" => {
                if a.p_bound.is_some() {
                    return Err(config_err(
                        "algorithm.p_scope",
                        "\"iteration\" re-derives P from the iterate; use p_margin, not p_bound",
                    ));
                }
                let margin = a.p_margin.unwrap_or(DEFAULT_P_MARGIN);
                if margin < 1.0 {
                    return Err(config_err(
                        "algorithm.p_margin",
                        "must be at least 1 when p_scope = \"iteration\"",
                    ));
                }
            }
            other => {
                return Err(config_err(
                    "algorithm.p_scope",
                    format!("unknown scope '{other}'; expected run or iteration"),
                ));
            }
        }
        for (name, value) in [
            ("algorithm.beta", a.beta),
            ("algorithm.beta_margin", a.beta_margin),
            ("algorithm.p_bound", a.p_bound),
            ("algorithm.p_margin", a.p_margin),
            ("algorithm.c_const", Some(a.c_const)),
        ] {
            if let Some(v) = value {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(config_err(name, "must be finite and positive"));
                }
            }
        }
        Ok(())
    }

    pub fn build_objective(&self) -> Objective {
        Objective::quadratic(self.dim)
    }

    /// Multiplier applied to every base variance at trial length `t`.
    pub fn sigma_factor(&self, t: u32) -> f64 {
        let s = &self.sigma_scaling;
        match s.rule.as_str() {
            "proportional" => t as f64 / s.t_ref as f64,
            "none" => 1.0,
            "table" => s
                .table
                .as_ref()
                .and_then(|table| table.iter().find(|e| e.t == t))
                .map(|e| e.factor)
                .expect("validated: table covers every T"),
            _ => unreachable!("validated rule"),
        }
    }

    /// Bank with effective variances scaled by `factor`. For the
    /// cost-fidelity mode the batch ladder is derived at base cost and
    /// the scaling applies to the resulting variances.
    pub fn build_bank(&self, factor: f64) -> Result<OracleBank> {
        let objective = self.build_objective();
        let gradient = objective.gradient.clone();
        let base = match self.bank.mode.as_str() {
            "direct" => OracleBank::direct(
                gradient,
                NoiseShape::SquaredGradient,
                self.bank.sigma_sq.clone().expect("validated: sigma_sq present"),
                self.dim,
            )?,
            "cost_fidelity" => {
                let cost_cfg = self.bank.cost.as_ref().expect("validated: cost present");
                let cost = match cost_cfg.family.as_str() {
                    "linear" => CostFunction::Linear { scale: cost_cfg.scale },
                    "power" => CostFunction::Power {
                        scale: cost_cfg.scale,
                        exponent: cost_cfg.exponent.expect("validated: exponent present"),
                    },
                    _ => unreachable!("validated family"),
                };
                let aggregation = match &self.bank.aggregation {
                    None => AggregationCost::None,
                    Some(agg) => match agg.family.as_str() {
                        "none" => AggregationCost::None,
                        "per_unit" => AggregationCost::PerUnit {
                            rate: agg.rate.expect("validated: rate present"),
                        },
                        _ => unreachable!("validated family"),
                    },
                };
                let model = CostModel {
                    cost,
                    aggregation,
                    budget: self.bank.budget.expect("validated: budget present"),
                    batch_cap: self.bank.batch_cap,
                };
                OracleBank::from_cost_model(gradient, NoiseShape::SquaredGradient, &model, self.dim)?
            }
            _ => unreachable!("validated mode"),
        };
        if factor == 1.0 {
            Ok(base)
        } else {
            base.scaled(factor)
        }
    }

    /// Selector parameters for one realization at trial length `t`.
    /// `trace_s_init` is the noise-shape trace at that realization's
    /// initial iterate.
    pub fn build_params(&self, t: u32, max_sigma_sq: f64, trace_s_init: f64) -> Result<EeGradParams> {
        EeGradParams::new(
            self.algorithm.alpha,
            self.algorithm.resolved_beta(max_sigma_sq),
            self.algorithm.resolved_p(trace_s_init),
            self.algorithm.c_const,
            self.dim,
            t,
        )
    }
}
