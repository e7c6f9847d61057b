use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum VortexError {
    #[error("grid extent {0} is odd; spectral operators need even extents")]
    OddGrid(usize),
    #[error("grid extent {0} is below the minimum of 8 points per axis")]
    GridTooSmall(usize),
    #[error("side length {0} must be finite and positive")]
    InvalidLength(f64),
    #[error("complex dimension {0} is not supported (use 1 or 2)")]
    UnsupportedDimension(usize),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("field turns by {angle:.3} rad per plaquette; refine the grid")]
    NearBranchCut { angle: f64 },
    #[error("requested {count} modes but singular values {a:e} and {b:e} are not separated")]
    DegenerateSpectrum { count: usize, a: f64, b: f64 },
    #[error("right-hand side has mean {0:e}; Poisson problem needs mean zero")]
    NonZeroMean(f64),
    #[error("metric is not positive definite at site {0}")]
    NonPositiveMetric(usize),
    #[error("state is missing the field `{0}` required by this system")]
    MissingField(&'static str),
    #[error("degree constraint violated by {violation:e}")]
    ConstraintViolation { violation: f64 },
    #[error("half-bundle needs deg K + deg L even, got {0}")]
    ParityError(i64),
    #[error("frame connection has (0,2) curvature {0:e}")]
    NonIntegrableFrame(f64),
    #[error("sigma = 4 pi / (tau - tau') needs tau > tau'")]
    NonPositiveSigma,
    #[error("rank must be positive")]
    RankZero,
    #[error("invalid stability model: {0}")]
    InvalidModel(String),
    #[error("corrupt checkpoint ({section}): {reason}")]
    CorruptCheckpoint { section: String, reason: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("config error at {key}: {message}")]
    Config { key: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VortexError>;
