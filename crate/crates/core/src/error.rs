use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid noise law: {0}")]
    InvalidNoise(String),

    #[error("invalid cost function: {0}")]
    InvalidCost(String),

    #[error("invalid decision problem: {0}")]
    InvalidProblem(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not reach tolerance {abs_tol:e} within {max_subdivisions} subdivisions")]
    QuadratureNonConvergence { abs_tol: f64, max_subdivisions: usize },

    #[error("noise width {width} for state {state} is not below the bound {bound}")]
    WidthExceedsBound { state: f64, width: f64, bound: f64 },

    #[error("no noise law assigned to state {0}")]
    UnassignedState(f64),

    #[error("incompatible experiments: {0}")]
    IncompatibleExperiments(String),

    #[error("garbling source region ({x0}, {xhat}) carries no probability mass")]
    EmptyMassRegion { x0: f64, xhat: f64 },

    #[error("restricted kernel requires 0 <= x0 < xhat < x1 and alpha in (0,1), got ({x0}, {xhat}, {x1}, {alpha})")]
    InvalidKernelSpec { x0: f64, xhat: f64, x1: f64, alpha: f64 },

    #[error("signal {signal} has zero marginal density")]
    ZeroMarginal { signal: f64 },

    #[error("back-substitution produced weight {value:e} at component {index}; target is not unimodal")]
    NegativeWeight { index: usize, value: f64 },

    #[error("difference quotients diverge near {at}; objective is not locally Lipschitz")]
    NonLipschitzSignal { at: f64 },

    #[error("operation needs {0}")]
    Unsupported(String),
}

impl Error {
    /// True for errors caused by malformed input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::QuadratureNonConvergence { .. }
                | Error::NegativeWeight { .. }
                | Error::NonLipschitzSignal { .. }
                | Error::ZeroMarginal { .. }
        )
    }
}
