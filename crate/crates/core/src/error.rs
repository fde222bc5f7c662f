use thiserror::Error;

use crate::quadrature::QuadratureResult;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("weight is singular at x = {x}")]
    Singularity { x: f64 },

    #[error("tolerance not met after {} panels (value {}, error estimate {})",
        best.panels_used, best.value, best.error_estimate + best.truncation_bound)]
    ToleranceNotMet { best: QuadratureResult },

    #[error("shell contributions do not decay; weight is probably not doubling (shell {shell})")]
    NonDoublingSuspected { shell: usize, best: QuadratureResult },

    #[error("non-quasiconformal sample at (x = {x}, t = {t}): J = {jacobian}, |mu| = {abs_mu}, budget = {budget}")]
    NonQuasiconformalSample {
        x: f64,
        t: f64,
        jacobian: f64,
        abs_mu: f64,
        budget: f64,
    },

    #[error("kernel '{0}' does not have zero mean")]
    ZeroMeanRequired(String),

    #[error("unknown kernel '{0}'")]
    UnknownKernel(String),

    #[error("unknown weight '{0}'")]
    UnknownWeight(String),

    #[error("invalid weight spec: {0}")]
    InvalidWeight(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ToleranceNotMet { .. }
                | Error::NonDoublingSuspected { .. }
                | Error::NonQuasiconformalSample { .. }
                | Error::Singularity { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
