use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("at least one variable is required")]
    NoVariables,

    #[error("variable `{name}` has {count} level(s), at least 2 are required")]
    TooFewLevels { name: String, count: usize },

    #[error("variable `{name}` lists level `{level}` more than once")]
    DuplicateLevel { name: String, level: String },

    #[error("level code {code} is out of range for variable `{name}` ({cardinality} levels)")]
    CodeOutOfRange {
        name: String,
        code: usize,
        cardinality: usize,
    },

    #[error("outcome has {got} coordinates, expected {expected}")]
    OutcomeLength { expected: usize, got: usize },

    #[error("invalid staging: {0}")]
    InvalidStaging(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid DAG: {0}")]
    InvalidDag(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column `{column}`: unknown level `{value}`")]
    UnknownLevel {
        row: usize,
        column: String,
        value: String,
    },

    #[error("CSV input has no columns")]
    NoColumns,

    #[error("smoothing constant must be nonnegative, got {0}")]
    NegativeAlpha(f64),

    #[error("dataset has no records")]
    EmptyDataset,

    #[error("cannot binarize a constant column")]
    ConstantColumn,

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error(
        "cannot keep variable `{variable}`: its staging depends on dropped variable `{depends_on}`"
    )]
    MarginalDependsOnDropped {
        variable: String,
        depends_on: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid variable selection: {0}")]
    InvalidSelection(String),

    #[error(
        "saturated tree has {leaves} leaves, above the limit of {limit}; pass the override flag to force it"
    )]
    SizeGuard { leaves: u128, limit: u128 },

    #[error("{0} is not implemented")]
    NotImplemented(&'static str),

    #[error("replicate exceeded the {limit_seconds} s timeout ({elapsed_seconds:.1} s)")]
    Timeout {
        limit_seconds: f64,
        elapsed_seconds: f64,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
