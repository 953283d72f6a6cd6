use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("row {row}: expected {expected} fields, found {found}")]
    MalformedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: column `{column}` is not a valid number: `{value}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: column `{column}` value {value} outside {range}")]
    FieldOutOfRange {
        row: usize,
        column: String,
        value: String,
        range: String,
    },

    #[error("header is missing column `{0}`")]
    MissingColumn(String),

    #[error("absenteeism hours {0} outside [0, 120]")]
    HoursOutOfRange(i64),

    #[error("attribute `{attribute}` has value {value} not present in the feature schema")]
    UnseenCategory { attribute: String, value: i64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is singular even after ridge {ridge:e}")]
    Singular { ridge: f64 },

    #[error("class {class} has {count} rows, need at least {needed}")]
    ClassTooSmall {
        class: String,
        count: usize,
        needed: usize,
    },

    #[error("SMOTE needs more than k={k} rows in class {class} (found {count}); use a smaller k")]
    SmoteNeighbors {
        class: String,
        count: usize,
        k: usize,
    },

    #[error("training data has a single class")]
    SingleClass,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("every grid-search cell failed")]
    GridExhausted,

    #[error("no class pair has both classes present")]
    NoClassPairs,

    #[error("bundle checksum mismatch (stored {stored}, computed {computed})")]
    Checksum { stored: String, computed: String },

    #[error("bundle format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("unknown model kind `{0}`")]
    UnknownKind(String),

    #[error("bundle is truncated or malformed: {0}")]
    Truncated(String),

    #[error("invalid bundle: {0}")]
    InvalidBundle(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
