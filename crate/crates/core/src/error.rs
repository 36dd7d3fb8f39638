use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit reports. Each variant maps to a stable
/// upper-case code (see [`Error::code`]) that the CLI prints in its JSON
/// diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("segment {index} of document {doc_id:?} is blank")]
    EmptySegment { doc_id: String, index: usize },

    #[error("document {doc_id:?}: expected segment index {expected}, found {found}")]
    IndexGap {
        doc_id: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("segment {index} of document {doc_id:?} declares {declared} tokens, tokenizer yields {actual}")]
    TokenCountMismatch {
        doc_id: String,
        index: usize,
        declared: usize,
        actual: usize,
    },

    #[error("zero vector{}", .index.map(|i| format!(" at position {i}")).unwrap_or_default())]
    ZeroVector { index: Option<usize> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("non-finite vector component")]
    NonFinite,

    #[error("unknown topic {0:?}")]
    UnknownTopic(String),

    #[error("no vector for {0:?}")]
    MissingVector(String),

    #[error("embedding failed for segment {index}: {source}")]
    SegmentEmbedding {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("alpha {0} outside (0, 1)")]
    AlphaOutOfRange(f64),

    #[error("theta {0} outside (0, 1)")]
    ThetaOutOfRange(f64),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("gap {gap} outside [1, {max}]")]
    GapOutOfRange { gap: usize, max: usize },

    #[error("input is empty")]
    EmptyInput,

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("document {0:?} has fewer than two annotators")]
    TooFewAnnotators(String),

    #[error("annotation agreement kappa = {kappa:.4} does not exceed 0.80")]
    CalibrationGateFailed { kappa: f64 },

    #[error("calibration set is empty")]
    EmptyCalibrationSet,

    #[error("holdout shares documents with the calibration set: {0:?}")]
    OverlappingSets(Vec<String>),

    #[error("no cross-topic segment pairs in the calibration corpus")]
    NoCrossTopicPairs,

    #[error("calibrated alpha {0} is outside (0, 1)")]
    AlphaDegenerate(f64),

    #[error("document {0:?} has segments without topic labels")]
    MissingTopics(String),

    #[error("header generator failed: {0}")]
    GeneratorFailed(String),

    #[error("domain taxonomy is empty")]
    EmptyTaxonomy,

    #[error("fragment has no applicable domains")]
    NoDomains,

    #[error("restructured output of document {0:?} drops source content")]
    FaithfulnessViolation(String),

    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported store schema version {0}")]
    SchemaVersionMismatch(u64),

    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable diagnostic code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptySegment { .. } => "EMPTY_SEGMENT",
            Error::IndexGap { .. } => "INDEX_GAP",
            Error::DuplicateId(_) => "DUPLICATE_ID",
            Error::TokenCountMismatch { .. } => "TOKEN_COUNT_MISMATCH",
            Error::ZeroVector { .. } => "ZERO_VECTOR",
            Error::DimMismatch { .. } => "DIM_MISMATCH",
            Error::NonFinite => "NON_FINITE",
            Error::UnknownTopic(_) => "UNKNOWN_TOPIC",
            Error::MissingVector(_) => "MISSING_VECTOR",
            Error::SegmentEmbedding { source, .. } => source.code(),
            Error::LengthMismatch { .. } => "LENGTH_MISMATCH",
            Error::AlphaOutOfRange(_) => "ALPHA_OUT_OF_RANGE",
            Error::ThetaOutOfRange(_) => "THETA_OUT_OF_RANGE",
            Error::EmptyCorpus => "EMPTY_CORPUS",
            Error::GapOutOfRange { .. } => "GAP_OUT_OF_RANGE",
            Error::EmptyInput => "EMPTY_INPUT",
            Error::Degenerate(_) => "DEGENERATE",
            Error::TooFewAnnotators(_) => "TOO_FEW_ANNOTATORS",
            Error::CalibrationGateFailed { .. } => "CALIBRATION_GATE_FAILED",
            Error::EmptyCalibrationSet => "EMPTY_CALIBRATION_SET",
            Error::OverlappingSets(_) => "OVERLAPPING_SETS",
            Error::NoCrossTopicPairs => "NO_CROSS_TOPIC_PAIRS",
            Error::AlphaDegenerate(_) => "ALPHA_DEGENERATE",
            Error::MissingTopics(_) => "MISSING_TOPICS",
            Error::GeneratorFailed(_) => "GENERATOR_FAILED",
            Error::EmptyTaxonomy => "EMPTY_TAXONOMY",
            Error::NoDomains => "NO_DOMAINS",
            Error::FaithfulnessViolation(_) => "FAITHFULNESS_VIOLATION",
            Error::InvalidSpec(_) => "INVALID_SPEC",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::SchemaVersionMismatch(_) => "SCHEMA_VERSION_MISMATCH",
            Error::Parse { .. } | Error::Json(_) => "PARSE_ERROR",
            Error::Io { .. } => "IO_ERROR",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
