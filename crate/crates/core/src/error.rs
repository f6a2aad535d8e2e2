use thiserror::Error;

/// Errors raised while building or querying a symbolic system.
#[derive(Debug, Error)]
pub enum Error {
    #[error("transition matrix is empty")]
    EmptyMatrix,
    #[error("transition matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("transition matrix entry ({row}, {col}) is {value}, expected 0 or 1")]
    BadEntry { row: usize, col: usize, value: i64 },
    #[error("symbol {symbol} has no {direction}")]
    DeadSymbol { symbol: usize, direction: &'static str },
    #[error("symbol {symbol} is outside the alphabet of size {d}")]
    SymbolOutOfRange { symbol: usize, d: usize },
    #[error("word {word:?} is not admissible")]
    Inadmissible { word: Vec<u8> },
    #[error("alphabet mismatch: {left} vs {right}")]
    AlphabetMismatch { left: usize, right: usize },
    #[error("transition matrix is not mixing: {reason}")]
    NotMixing { reason: String },
    #[error("potential table is missing admissible word {word}")]
    MissingEntry { word: String },
    #[error("potential table lists inadmissible word {word}")]
    ExtraEntry { word: String },
    #[error("malformed word key {key:?}")]
    BadWordKey { key: String },
    #[error("roof function must be strictly positive, minimum is {min}")]
    NonPositiveRoof { min: f64 },
    #[error("m = {m} must exceed the mixing exponent {mixing}")]
    ExponentTooSmall { m: usize, mixing: usize },
    #[error("cylinder must start at coordinate 0, got {start}")]
    CylinderStart { start: i64 },
    #[error("power iteration did not converge after {iterations} iterations (spread {spread:e})")]
    NoConvergence { iterations: usize, spread: f64 },
    #[error("transfer operator has an empty block space")]
    EmptyBlockSpace,
    #[error("invalid past marginal: {0}")]
    InvalidMarginal(String),
    #[error("glued measure is materialized to depth {have}, {need} required")]
    InsufficientDepth { have: usize, need: usize },
    #[error("horizon {horizon} does not exceed the maximal roof value {max_roof}")]
    DegenerateHorizon { horizon: f64, max_roof: f64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, one per rejection class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyMatrix => "E_EMPTY_MATRIX",
            Error::NotSquare { .. } => "E_NOT_SQUARE",
            Error::BadEntry { .. } => "E_BAD_ENTRY",
            Error::DeadSymbol { .. } => "E_DEAD_SYMBOL",
            Error::SymbolOutOfRange { .. } => "E_SYMBOL_RANGE",
            Error::Inadmissible { .. } => "E_INADMISSIBLE",
            Error::AlphabetMismatch { .. } => "E_ALPHABET",
            Error::NotMixing { .. } => "E_NOT_MIXING",
            Error::MissingEntry { .. } => "E_MISSING_ENTRY",
            Error::ExtraEntry { .. } => "E_EXTRA_ENTRY",
            Error::BadWordKey { .. } => "E_WORD_KEY",
            Error::NonPositiveRoof { .. } => "E_ROOF",
            Error::ExponentTooSmall { .. } => "E_EXPONENT",
            Error::CylinderStart { .. } => "E_CYLINDER_START",
            Error::NoConvergence { .. } => "E_NO_CONVERGENCE",
            Error::EmptyBlockSpace => "E_EMPTY_BLOCKS",
            Error::InvalidMarginal(_) => "E_MARGINAL",
            Error::InsufficientDepth { .. } => "E_DEPTH",
            Error::DegenerateHorizon { .. } => "E_HORIZON",
            Error::Config(_) => "E_CONFIG",
            Error::Json(_) => "E_JSON",
            Error::Csv(_) => "E_CSV",
            Error::Io(_) => "E_IO",
        }
    }

    /// True for errors caused by a malformed system description.
    pub fn is_schema_error(&self) -> bool {
        matches!(
            self,
            Error::EmptyMatrix
                | Error::NotSquare { .. }
                | Error::BadEntry { .. }
                | Error::DeadSymbol { .. }
                | Error::SymbolOutOfRange { .. }
                | Error::Inadmissible { .. }
                | Error::AlphabetMismatch { .. }
                | Error::MissingEntry { .. }
                | Error::ExtraEntry { .. }
                | Error::BadWordKey { .. }
                | Error::NonPositiveRoof { .. }
                | Error::InvalidMarginal(_)
                | Error::Config(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
