//! Zero-range process condensation at criticality.
//!
//! Stationary single-site laws from jump rates ([`marginal`]), exact finite-size
//! distributions of sums and maxima ([`oracle`]), critical-scale asymptotics and
//! limit laws ([`asymptotics`]), conditional samplers and kinetic Monte Carlo
//! ([`sampler`]), and sample statistics ([`stats`]).

pub mod asymptotics;
pub mod error;
pub mod marginal;
pub mod num;
pub mod oracle;
pub mod par;
pub mod sampler;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use marginal::{critical_stats, CutoffPolicy, Family, Marginal, ModelSpec, Weights};
pub use par::Exec;

/// Library version, recorded in experiment metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
