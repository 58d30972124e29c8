use thiserror::Error;

/// Errors raised by the model, oracle, sampler and statistics layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("partition function diverges at fugacity {phi} (power-law rates with b <= 1)")]
    NonConvergent { phi: f64 },
    #[error("variance is infinite for power-law rates with b = {b}; b > 3 is required")]
    InfiniteVariance { b: f64 },
    #[error("density {rho} exceeds the critical density {rho_c}")]
    Supercritical { rho: f64, rho_c: f64 },
    #[error("tail prefactor is undefined: {0}")]
    UndefinedTailPrefactor(String),
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("Cramér coefficients of order {order} are not built in and must be supplied")]
    UnsupportedCramer { order: usize },
    #[error("condensate fraction {a} is not above lambda/(1+lambda) = {bound}")]
    NonPositive { a: f64, bound: f64 },
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("P[S_L = N] vanishes at machine scale for L = {l}, N = {n}")]
    ImpossibleN { l: u64, n: u64 },
    #[error("resource budget exceeded: {0}")]
    Budget(String),
    #[error("target mean {target} is outside the attainable range ({lo}, {hi})")]
    Unreachable { target: f64, lo: f64, hi: f64 },
    #[error("rejection budget exhausted after {trials} trials (acceptance rate {rate:.3e})")]
    RejectionBudget { trials: u64, rate: f64 },
    #[error("sample of size {n} is below the required minimum {min}")]
    SampleTooSmall { n: usize, min: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
