//! Budget-constrained gradient estimation for SGD when several stochastic
//! gradient oracles of different cost and fidelity are available.
//!
//! Each SGD iteration gets a fixed budget of T oracle pulls. A
//! bandit-style selector spends the first 2N rounds pulling every oracle
//! twice, then keeps picking the oracle whose streaming covariance-trace
//! estimate minus a confidence radius is smallest. The gradient estimate
//! is the plain average of all T samples, forced pulls included.
//!
//! Module map:
//! - [`math`]: confidence radius, its inverse, bound constants,
//!   contraction factors, and the exact covariance quadratic form.
//! - [`oracle`]: cost-fidelity models and sampling banks.
//! - [`selector`]: streaming statistics and the T-round selection loop.
//! - [`sgd`]: outer SGD loops (adaptive, pinned-oracle) and contraction
//!   predictions.
//! - [`experiment`]: config-driven Monte Carlo runs with CSV and manifest
//!   output.
//! - [`cli`]: the `run` / `validate` / `constants` / `regret` command
//!   line, used by the thin `eegrad` binary.
//!
//! The `examples/` directory walks through each capability; start with
//! `cargo run --example confidence_bounds`.

pub mod cli;
pub mod error;
pub mod experiment;
pub mod math;
pub mod oracle;
pub mod selector;
pub mod sgd;

pub use error::{Error, Result};
