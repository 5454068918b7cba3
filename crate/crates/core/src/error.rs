use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // dataset
    #[error("IDX magic mismatch: expected {expected:#010x}, found {found:#010x}")]
    MagicMismatch { expected: u32, found: u32 },
    #[error("IDX payload truncated: header promises {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("IDX payload has {extra} trailing bytes after the declared tensor")]
    TrailingBytes { extra: usize },
    #[error("sample count {requested} exceeds available {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("sample entry {value} at ({row}, {col}) outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("empty sample set")]
    EmptySamples,

    // shared
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input at index {index}")]
    NonFiniteInput { index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    // operators
    #[error("power iteration did not converge; best estimate {estimate}")]
    NoConvergence { estimate: f64 },
    #[error("operator is rank deficient: sigma_min estimate {estimate}")]
    InvalidRank { estimate: f64 },

    // prior
    #[error("mgf would overflow: max score {max_score} > 700")]
    OverflowRisk { max_score: f64 },
    #[error("dimension {d} too large for a dense Hessian (limit {limit})")]
    DimensionTooLarge { d: usize, limit: usize },

    // solver
    #[error("line search failed at iteration {iteration}")]
    LineSearchFailure { iteration: usize },
    #[error("negative input: {0}")]
    NegativeInput(f64),

    // recovery
    #[error("every weight fell below the threshold {tau}")]
    EmptySupport { tau: f64 },
    #[error("mask level gamma = {0} outside [0, 0.5)")]
    InvalidGamma(f64),
    #[error("reference vector has zero norm")]
    ZeroReference,

    // noise
    #[error("probability {0} outside [0, 0.5]")]
    InvalidProbability(f64),

    // diagnostics
    #[error("MGF bound violated: {violations} of {trials} samples")]
    BoundViolated { violations: usize, trials: usize },
    #[error("operator is rank deficient (sigma_min = {sigma_min})")]
    RankDeficient { sigma_min: f64 },

    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
