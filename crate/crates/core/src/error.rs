use std::path::PathBuf;

/// Errors produced by loaders, metrics and image operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A row or field could not be parsed. `line` is 1-based within the file.
    #[error("{source_name}: line {line}: {reason}")]
    Malformed {
        source_name: String,
        line: u64,
        reason: String,
    },

    #[error("{0}: no records")]
    NoRecords(String),

    #[error("duplicate {0}")]
    Duplicate(String),

    #[error("non-finite score at line {line}")]
    NonFinite { line: u64 },

    #[error("line {line}: unknown label {label:?} (expected \"bonafide\" or \"morph\")")]
    UnknownLabel { line: u64, label: String },

    #[error("landmarks: {0}")]
    Landmarks(String),

    #[error("image: {0}")]
    Image(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("both bona fide and morph records are required, found only {0}")]
    SingleClass(&'static str),

    #[error(
        "morph {morph_id:?} subject {subject_index} has {samples} samples; \
         MMPMR needs exactly one sample per subject, use ProdAvg-MMPMR"
    )]
    MultipleSamples {
        morph_id: String,
        subject_index: u32,
        samples: usize,
    },

    #[error("triangulation: {0}")]
    Triangulation(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used by the CLI's JSON error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Malformed { .. } => "malformed",
            Error::NoRecords(_) => "no_records",
            Error::Duplicate(_) => "duplicate",
            Error::NonFinite { .. } => "non_finite",
            Error::UnknownLabel { .. } => "unknown_label",
            Error::Landmarks(_) => "landmarks",
            Error::Image(_) => "image",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidInput(_) => "invalid_input",
            Error::SingleClass(_) => "single_class",
            Error::MultipleSamples { .. } => "multiple_samples",
            Error::Triangulation(_) => "triangulation",
            Error::Manifest(_) => "manifest",
            Error::Json(_) => "json",
        }
    }
}
