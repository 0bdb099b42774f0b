use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("newton iteration did not converge (residual {residual:e} after {iterations} iterations)")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("degenerate jacobian: {0}")]
    DegenerateJacobian(String),
    #[error("continuation stalled at parameter value {last_good}: {reason}")]
    ContinuationStalled { last_good: f64, reason: String },
    #[error("solvability condition violated: {0}")]
    Solvability(String),
    #[error("eigensolver failure: {0}")]
    Eigen(String),
    #[error("integration failure: {0}")]
    Integration(String),
    #[error("contour exceeded {0} points without resolving the argument")]
    MaxPointsExceeded(usize),
    #[error("evans function vanishes on the contour near {0}")]
    ZeroOnContour(String),
    #[error("expected 2 roots of D(.,0) inside |lambda| <= {radius}, found {found}")]
    WrongRootCountAtR { radius: f64, found: i64 },
    #[error("degenerate quadratic: |c20| = {0:e}")]
    DegenerateQuadratic(f64),
    #[error("root polishing failed: {0}")]
    NoConvergence(String),
    #[error("bisection interval not bracketed: {0}")]
    NotBracketed(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("probe at X = {x} failed: {source}")]
    Probe { x: f64, source: Box<Error> },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of an iterative method, as opposed to invalid input.
    pub fn is_nonconvergence(&self) -> bool {
        if let Error::Probe { source, .. } = self {
            return source.is_nonconvergence();
        }
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::DegenerateJacobian(_)
                | Error::ContinuationStalled { .. }
                | Error::Integration(_)
                | Error::MaxPointsExceeded(_)
                | Error::NoConvergence(_)
                | Error::Eigen(_)
                | Error::WrongRootCountAtR { .. }
                | Error::DegenerateQuadratic(_)
                | Error::ZeroOnContour(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
