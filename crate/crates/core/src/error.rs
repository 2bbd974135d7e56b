use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed model file: {0}")]
    Parse(String),

    #[error("invalid model: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("block index {index} out of range for {blocks} blocks")]
    BlockIndex { index: usize, blocks: usize },

    #[error("covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("rho = {rho} must lie below min rho_k = {min_rho_k}")]
    RhoOutOfRange { rho: f64, min_rho_k: f64 },

    #[error("no certificate: {0}")]
    NoCertificate(String),

    #[error("operation requires a Gaussian model (quartic coefficients must be zero)")]
    NotGaussian,

    #[error("mixture would hold {requested} components, cap is {cap}")]
    ComponentCap { requested: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature mass defect {defect:.3e} exceeds {limit:.0e}; enlarge the box")]
    MassDefect { defect: f64, limit: f64 },

    #[error("time step {dt} exceeds stability bound {limit}")]
    StepSize { dt: f64, limit: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
