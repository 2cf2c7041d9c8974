use thiserror::Error;

/// Errors raised by the risk engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("threshold {y} outside the support ({lo}, {hi})")]
    OutOfRange { y: f64, lo: f64, hi: f64 },

    #[error("saddlepoint iteration did not converge after {iterations} steps (y = {y})")]
    NoConvergence { y: f64, iterations: usize },

    #[error("tail probability {prob:e} too small for a conditional quantity")]
    DegenerateTail { prob: f64 },

    #[error("conditional mean is not strictly monotone in the risk factor")]
    NotMonotone,

    #[error("a'Ωa = {value:e} is not positive; cannot deflate along a")]
    SingularDirection { value: f64 },

    #[error("exposure {exposure} is not an integer multiple of quantum {quantum}")]
    NonIntegerExposure { exposure: f64, quantum: f64 },

    #[error("loss level {y} cannot occur")]
    ImpossibleLoss { y: f64 },

    #[error("could not bracket target {target} on [{lo}, {hi}]")]
    BracketFailure { target: f64, lo: f64, hi: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("asset {id}: {reason}")]
    InvalidAsset { id: String, reason: String },

    #[error("duplicate asset id {0}")]
    DuplicateId(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Stable, machine-readable name of the variant.
    pub fn name(&self) -> &'static str {
        match self {
            Error::OutOfRange { .. } => "OutOfRange",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::DegenerateTail { .. } => "DegenerateTail",
            Error::NotMonotone => "NotMonotone",
            Error::SingularDirection { .. } => "SingularDirection",
            Error::NonIntegerExposure { .. } => "NonIntegerExposure",
            Error::ImpossibleLoss { .. } => "ImpossibleLoss",
            Error::BracketFailure { .. } => "BracketFailure",
            Error::InvalidInput(_) => "InvalidInput",
            Error::InvalidAsset { .. } => "InvalidAsset",
            Error::DuplicateId(_) => "DuplicateId",
            Error::Parse { .. } => "Parse",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
