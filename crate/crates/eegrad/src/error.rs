use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("need at least 2 samples for a covariance estimate, got {got}")]
    TooFewSamples { got: usize },

    #[error("stacked size {size} exceeds the verification cap of {cap}")]
    SizeCapExceeded { size: usize, cap: usize },

    #[error("budget {budget} cannot afford a single draw (cost floor {floor})")]
    NoFeasibleOracle { budget: f64, floor: f64 },

    #[error(
        "feasible batch sizes appear unbounded (still feasible at n = {probed}); \
         set an explicit batch_cap"
    )]
    UnboundedFeasibleSet { probed: u32 },

    #[error("oracle index {index} out of range 1..={max}")]
    OracleIndexOutOfRange { index: usize, max: usize },

    #[error("round budget {rounds} is too small: need at least 2N+1 = {minimum}")]
    TooFewRounds { rounds: u32, minimum: u32 },

    #[error("adaptive selection before initialization: round {round}, need {needed} forced pulls")]
    SelectionBeforeInit { round: u32, needed: u32 },

    #[error("step size {eta} outside (0, {bound})")]
    StepSizeOutOfRange { eta: f64, bound: f64 },

    #[error("step size {eta} rejected at iteration {iteration}: bound is {bound}")]
    StepSizeRejected { iteration: u32, eta: f64, bound: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
