use thiserror::Error;

/// Errors produced by the hologram, assignment and statistics routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    Dimension {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("position ({m}, {n}) is outside the {nx}x{ny} Fourier grid")]
    OutOfBounds { m: i64, n: i64, nx: usize, ny: usize },

    #[error("pattern contains no tweezers")]
    EmptyPattern,

    #[error("duplicate tweezer position ({0}, {1})")]
    DuplicatePosition(i32, i32),

    #[error("insufficient atoms: {available} available for {required} targets")]
    InsufficientAtoms { available: usize, required: usize },

    #[error("problem too large for exhaustive search: {0}")]
    SizeCap(String),

    #[error("degenerate detector: F0 + F1 = {0} must exceed 1")]
    DegenerateDetector(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sites collide at ({0}, {1}) after rounding to the Fourier grid")]
    Collision(i32, i32),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Dimension { .. } => "dimension",
            Error::OutOfBounds { .. } => "bounds",
            Error::EmptyPattern => "empty_pattern",
            Error::DuplicatePosition(..) => "duplicate_position",
            Error::InsufficientAtoms { .. } => "insufficient_atoms",
            Error::SizeCap(_) => "size_cap",
            Error::DegenerateDetector(_) => "degenerate_detector",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Collision(..) => "collision",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
