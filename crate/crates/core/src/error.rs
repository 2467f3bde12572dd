use alloc::string::String;

/// Errors produced by the core library.
///
/// Every variant names the offending table, column or row where one exists.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("table `{0}` is declared but missing")]
    MissingTable(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{column}` in table `{table}`")]
    UnknownColumn { table: String, column: String },
    #[error("duplicate primary key `{value}` in table `{table}` (column `{column}`, row {row})")]
    DuplicatePrimaryKey { table: String, column: String, row: usize, value: String },
    #[error("foreign key `{value}` in `{table}.{column}` (row {row}) has no matching row in `{parent}`")]
    DanglingForeignKey { table: String, column: String, row: usize, value: String, parent: String },
    #[error("foreign-key graph contains a cycle through `{0}`")]
    CycleDetected(String),
    #[error("cannot parse `{value}` in `{table}.{column}` (row {row}) as a finite number")]
    TypeParseError { table: String, column: String, row: usize, value: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("table `{0}` has no rows")]
    EmptyTable(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("tables `{0}` and `{1}` are not connected by foreign keys")]
    Disconnected(String, String),
    #[error("child row {row} of `{table}` has no parent row")]
    OrphanChildRow { table: String, row: usize },
    #[error("need at least {needed} rows to fit {needed} clusters, got {got}")]
    InsufficientRows { needed: usize, got: usize },
    #[error("bad parameter range: {0}")]
    BadRange(String),
    #[error("non-finite loss at iteration {iteration} (last finite loss {last_finite})")]
    NonFiniteLoss { iteration: usize, last_finite: f64 },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u32, classes: usize },
    #[error("label {0} was never observed while fitting")]
    UnseenLabel(u32),
    #[error("empty sample")]
    EmptySample,
    #[error("empty histogram")]
    EmptyHistogram,
    #[error("empty input")]
    EmptyInput,
    #[error("matching needs non-empty versions; version {0} is empty")]
    EmptyVersion(usize),
    #[error("missing model for `{0}`")]
    MissingModel(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
