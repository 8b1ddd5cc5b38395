use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty local dictionary")]
    EmptyLocalDictionary,

    #[error("empty document")]
    EmptyDocument,

    #[error("undefined cosine distance (zero-norm input)")]
    UndefinedCosineDistance,

    #[error("bandwidth must be positive (or +inf), got {0}")]
    InvalidBandwidth(f64),

    #[error("degenerate weights: all sample weights are zero")]
    DegenerateWeights,

    #[error("order p = {p} exceeds the number of distinct words d = {d}")]
    OrderOutOfRange { p: usize, d: usize },

    #[error("d = {d} is outside the closed-form domain (requires d >= {min})")]
    OutOfClosedFormDomain { d: usize, min: usize },

    #[error("degenerate (d-2 = 0): pair exclusion needs d >= 3")]
    DegeneratePairExclusion,

    #[error("enumeration too large: d = {0} exceeds the exact-enumeration limit of 20")]
    EnumerationTooLarge(usize),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("dictionary mismatch: {0}")]
    DictionaryMismatch(String),

    #[error("need n_exp >= 2 for std")]
    NeedTwoRuns,

    #[error("unknown word `{0}` (not in the local dictionary)")]
    UnknownWord(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
