use thiserror::Error;

use crate::maxent::MaxEntSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// The constraint marginals do not share the required one-variable marginal.
    #[error("infeasible constraints: shared marginal {marginal} differs by {gap:.3e} (max-norm)")]
    InfeasibleConstraints { marginal: &'static str, gap: f64 },

    /// The solver hit its iteration caps. The best iterate is kept so callers
    /// can inspect how far off it was.
    #[error(
        "solver did not converge: residual {:.3e} after {} Newton steps",
        best.residual,
        best.iterations
    )]
    NonConvergence { best: Box<MaxEntSolution> },

    #[error("unsupported instance: {0}")]
    UnsupportedInstance(String),

    #[error("inconsistent data: {marginal} disagrees by total variation {tv_gap:.4} (tolerance {tolerance})")]
    InconsistentData {
        marginal: &'static str,
        tv_gap: f64,
        tolerance: f64,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the input data (as opposed to the solver or I/O).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidDistribution(_)
                | Error::InfeasibleConstraints { .. }
                | Error::InconsistentData { .. }
                | Error::UnsupportedInstance(_)
        )
    }
}
