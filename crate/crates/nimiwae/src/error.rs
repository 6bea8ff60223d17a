use thiserror::Error;

/// Unified error type for the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tape node {node}: {msg}")]
    Tape { node: usize, msg: String },

    #[error("backward seed node {node} is not a scalar (shape {rows}x{cols})")]
    NonScalarSeed { node: usize, rows: usize, cols: usize },

    #[error("logsumexp of an empty vector")]
    EmptyLogSumExp,

    #[error("logsumexp of an all -inf vector")]
    DegenerateLogSumExp,

    #[error("optimizer shape mismatch for parameter {index}: {msg}")]
    OptimizerShape { index: usize, msg: String },

    #[error("non-finite gradient entries in parameter {index}; step skipped")]
    NonFiniteGradient { index: usize },

    #[error("dimension mismatch: {0}")]
    Dim(String),

    #[error("non-positive sigma at coordinate {0}")]
    NonPositiveSigma(usize),

    #[error("non-binary mask entry {value} at coordinate {index}")]
    NonBinary { index: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("covariate index {0} out of range for {1} features")]
    CovariateOutOfRange(usize, usize),

    #[error("all {0} rows of the batch produced non-finite log-weights")]
    AllRowsAborted(usize),

    #[error("empty {0} split")]
    EmptySplit(&'static str),

    #[error("non-finite parameters at epoch {epoch}, batch {batch}: {diagnostic}")]
    NanParams {
        epoch: usize,
        batch: usize,
        diagnostic: String,
    },

    #[error("all {0} grid configurations diverged")]
    GridAllDiverged(usize),

    #[error("model parameters contain non-finite values ({0})")]
    NonFiniteParams(String),

    #[error("column {0} has no observed training values")]
    FullyMissingColumn(usize),

    #[error("target missing fraction {target} unreachable (attainable range [{lo:.4}, {hi:.4}])")]
    UnreachableTarget { target: f64, lo: f64, hi: f64 },

    #[error("csv parse error at row {row}, column {col}: {msg}")]
    CsvCell { row: usize, col: usize, msg: String },

    #[error("ragged csv: row {row} has {got} fields, expected {expected}")]
    RaggedCsv { row: usize, got: usize, expected: usize },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("collinear design: column {0} is linearly dependent on earlier columns")]
    Collinear(usize),

    #[error("logistic fit diverged (coefficient norm {0:.3e} > 1e3); possible separation")]
    Separation(f64),

    #[error("singular information matrix")]
    SingularInformation,

    #[error("response must contain both classes")]
    DegenerateResponse,

    #[error("zero masked entries to evaluate")]
    NoMaskedEntries,

    #[error("{0}")]
    Invalid(String),
}
