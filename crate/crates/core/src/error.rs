use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("x = {x} outside the window [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("integral diverges: {0}")]
    Divergence(String),

    #[error("graph construction failed: {0}")]
    Construction(String),

    #[error("singular linear system at {location}: {detail}")]
    Singular { location: String, detail: String },

    #[error("step too large: displacement {displacement:.4} exceeds channel width {width:.4}")]
    StepTooLarge { displacement: f64, width: f64 },

    #[error("simulation fault: {0}")]
    Fault(String),

    #[error("missing truncation bound: {0}")]
    MissingTailBound(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
