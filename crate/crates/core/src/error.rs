use thiserror::Error;

use crate::anomaly::rule::RuleError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed csv at row {row}: {reason}")]
    MalformedCsv { row: usize, reason: String },
    #[error("input has no data rows")]
    EmptyInput,
    #[error("column not found: {0}")]
    ColumnNotFound(String),
    #[error("column {column} is {found}, expected {expected}")]
    KindMismatch {
        column: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("invalid group spec: {0}")]
    InvalidSpec(String),
    #[error("table has no categorical columns")]
    NoCategoricalColumns,
    #[error("table has no numeric columns")]
    NoNumericColumns,
    #[error("group was built for version {group}, table is at version {table}")]
    StaleGroup { group: u64, table: u64 },
    #[error("anomaly record does not match the current table: {0}")]
    StaleRecord(String),
    #[error("no repair can be suggested: {0}")]
    NoSuggestion(String),
    #[error("action does not apply to the current table: {0}")]
    StaleAction(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("no numeric cells to average in {0}")]
    EmptyMeanBasis(String),
    #[error("cell {row}/{column} is not convertible: {text:?}")]
    NotConvertible {
        row: usize,
        column: String,
        text: String,
    },
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("nothing to redo")]
    NothingToRedo,
    #[error("unknown wrangler: {0}")]
    UnknownWrangler(String),
    #[error("custom wrangler {id} failed: {reason}")]
    Wrangler { id: String, reason: String },
    #[error("dataset fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("unsupported kind: {0}")]
    UnsupportedKind(String),
    #[error("action cannot be expressed in the target language: {0}")]
    UnsupportedAction(String),
    #[error("table is at version {found}, request expected {expected}")]
    VersionConflict { expected: u64, found: u64 },
    #[error("spec {spec}: {source}")]
    InSpec {
        spec: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable code, shared by the HTTP API and the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedCsv { .. } => "MALFORMED_CSV",
            Error::EmptyInput => "EMPTY_INPUT",
            Error::ColumnNotFound(_) => "COLUMN_NOT_FOUND",
            Error::KindMismatch { .. } => "KIND_MISMATCH",
            Error::InvalidSpec(_) => "INVALID_SPEC",
            Error::NoCategoricalColumns => "NO_CATEGORICAL_COLUMNS",
            Error::NoNumericColumns => "NO_NUMERIC_COLUMNS",
            Error::StaleGroup { .. } => "STALE_GROUP",
            Error::StaleRecord(_) => "STALE_RECORD",
            Error::NoSuggestion(_) => "NO_SUGGESTION",
            Error::StaleAction(_) => "STALE_ACTION",
            Error::InvalidAction(_) => "INVALID_ACTION",
            Error::EmptyMeanBasis(_) => "EMPTY_MEAN_BASIS",
            Error::NotConvertible { .. } => "NOT_CONVERTIBLE",
            Error::Rule(RuleError::Syntax { .. }) => "RULE_SYNTAX_ERROR",
            Error::Rule(RuleError::Type { .. }) => "RULE_TYPE_ERROR",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::NothingToUndo => "NOTHING_TO_UNDO",
            Error::NothingToRedo => "NOTHING_TO_REDO",
            Error::UnknownWrangler(_) => "UNKNOWN_WRANGLER",
            Error::Wrangler { .. } => "WRANGLER_FAILED",
            Error::FingerprintMismatch { .. } => "FINGERPRINT_MISMATCH",
            Error::UnsupportedKind(_) => "UNSUPPORTED_KIND",
            Error::UnsupportedAction(_) => "UNSUPPORTED_ACTION",
            Error::VersionConflict { .. } => "VERSION_CONFLICT",
            Error::InSpec { source, .. } => source.code(),
        }
    }

    pub(crate) fn in_spec(self, spec: impl std::fmt::Display) -> Error {
        Error::InSpec {
            spec: spec.to_string(),
            source: Box::new(self),
        }
    }
}
