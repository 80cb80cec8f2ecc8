use thiserror::Error;

/// Failure modes of the solvers, simulations and diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("alpha not admissible: {0}")]
    AlphaNotAdmissible(String),
    #[error("profile integration reached s_max = {s_max} without an event")]
    NoEvent { s_max: f64 },
    #[error("shooting bracket invalid: both ends classify as {0}")]
    BracketInvalid(String),
    #[error("bisection did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("velocity identity denominator {0:e} is numerically zero")]
    DivideNearZero(f64),
    #[error("penalized reaction has no root in (a_minus, alpha)")]
    NoRootAlphaMu,
    #[error("explicit step dt = {dt:e} exceeds 0.4 h^2 = {limit:e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("IMEX step dt = {dt:e} exceeds 0.2 / max|f'| = {limit:e}")]
    ImexStability { dt: f64, limit: f64 },
    #[error("tridiagonal system is singular at row {0}")]
    TridiagSingular(usize),
    #[error("initial ramp [{start}, {end}] does not fit in the grid")]
    RampOutOfGrid { start: f64, end: f64 },
    #[error("no admissible delta for the comparison envelopes: {0}")]
    NoAdmissibleDelta(String),
    #[error("envelope ordering fails at t = 0: {0}")]
    OrderingPrecondition(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no free boundary detected: {0}")]
    NoFreeBoundary(String),
    #[error("third differences are dominated by rounding: {0}")]
    NoiseDominated(String),
    #[error("moving frame leaves the grid: {0}")]
    FrameOutOfGrid(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Precondition and configuration errors, as opposed to numerical failures.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::AlphaNotAdmissible(_)
                | Error::CflViolation { .. }
                | Error::ImexStability { .. }
                | Error::RampOutOfGrid { .. }
                | Error::OrderingPrecondition(_)
                | Error::Parse(_)
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
