use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Root bracketing could not isolate the sign changes of a derivative.
    #[error("root isolation failed: {0}")]
    ResolutionTooCoarse(String),

    #[error(
        "Remez iteration did not converge after {iterations} iterations (norm excess {excess:.3e})"
    )]
    NonConvergence { iterations: usize, excess: f64 },

    #[error("matrix {index} has complex eigenvalue {re} + {im}i")]
    ComplexSpectrum { index: usize, re: f64, im: f64 },

    #[error(
        "matrix {index}: shifted exponent -({eigenvalue}) - {eps} = {shifted} is not positive"
    )]
    MarginViolated {
        index: usize,
        eigenvalue: f64,
        eps: f64,
        shifted: f64,
    },

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("no quasipolynomial satisfies p'(0) - eps p(0) > 0 on the grid (eps = {eps})")]
    NoFeasibleDirection { eps: f64 },

    #[error("linear program failed: {0}")]
    LinearProgram(String),
}

impl Error {
    /// Stable machine-readable name, used in CLI error payloads.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::ResolutionTooCoarse(_) => "ResolutionTooCoarse",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::ComplexSpectrum { .. } => "ComplexSpectrum",
            Error::MarginViolated { .. } => "MarginViolated",
            Error::InternalInconsistency(_) => "InternalInconsistency",
            Error::NoFeasibleDirection { .. } => "NoFeasibleDirection",
            Error::LinearProgram(_) => "LinearProgram",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
