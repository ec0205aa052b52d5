use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown key symbol {0:?}")]
    UnknownKey(String),

    #[error("incomplete layout: missing key {0}")]
    IncompleteLayout(String),

    #[error("duplicate key {0} in layout")]
    DuplicateKey(String),

    #[error("non-positive width {width} for key {key}")]
    NonPositiveWidth { key: String, width: f64 },

    #[error("non-finite coordinate for key {0}")]
    NonFiniteCoordinate(String),

    #[error("degenerate layout: keys {0} and {1} share a center")]
    DegenerateLayout(String, String),

    #[error("non-positive radius {0}")]
    NonPositiveRadius(f64),

    #[error("invalid PIN {0:?}")]
    InvalidPin(String),

    #[error("PIN length {0} out of range 1..=10")]
    PinLengthOutOfRange(usize),

    #[error("invalid timing sequence: {0}")]
    InvalidSequence(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("too few samples: {got} given, at least {need} required")]
    TooFewSamples { got: usize, need: usize },

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("missing pair position in sample {0}")]
    MissingPosition(usize),

    #[error("invalid training sample {index}: {msg}")]
    InvalidSample { index: usize, msg: String },

    #[error("non-monotonic timestamps in session {session} at line {line}")]
    NonMonotonic { session: String, line: usize },

    #[error("session {0} too short: at least 2 keystrokes required")]
    SessionTooShort(String),

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("unexpected end of dictionary")]
    UnexpectedEof,

    #[error("bad dictionary header: {0}")]
    BadHeader(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("fingerprint mismatch: dictionary built with {dictionary}, used with {supplied}")]
    FingerprintMismatch { dictionary: String, supplied: String },

    #[error("undefined correlation: constant vector")]
    UndefinedCorrelation,

    #[error("empty dictionary")]
    EmptyDictionary,

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("multi-entry group for {0} has fewer than {1} entries")]
    GroupTooSmall(String, usize),

    #[error("invalid typist profile: {0}")]
    InvalidProfile(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("subject {0} appears in both training and testing data")]
    SubjectOverlap(String),

    #[error("insufficient training data: {0}")]
    InsufficientTraining(String),

    #[error("layout {0} is not circular")]
    NotCircular(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}
