//! Crate-wide error type.
//!
//! Domain errors carry the name of the violated contract; the CLI prints
//! `error.name()` on stderr so callers can match on stable identifiers.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // -- dataset -----------------------------------------------------------
    #[error("missing column '{0}' in input")]
    MissingColumn(String),
    #[error("unparsable value at row {row}, column '{col}': {value:?}")]
    UnparsableValue {
        row: usize,
        col: String,
        value: String,
    },
    #[error("missing value at row {row}, column '{col}'")]
    MissingValue { row: usize, col: String },
    #[error("empty input file")]
    EmptyFile,
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("duplicate column name '{0}'")]
    DuplicateColumn(String),
    #[error("split leaves an empty partition (n={n}, fraction={fraction})")]
    DegenerateSplit { n: usize, fraction: f64 },
    #[error("bad fold count k={k} for n={n} (need 2 <= k <= n)")]
    BadK { k: usize, n: usize },
    #[error("column '{0}' does not have the sensitive role")]
    NotSensitive(String),
    #[error("no column with the slice role named '{0}'")]
    NoSliceColumn(String),
    #[error("no such column '{0}'")]
    NoSuchColumn(String),
    #[error("column '{0}' is not numeric")]
    NonNumericColumn(String),
    #[error("unknown column '{0}' referenced")]
    UnknownColumn(String),

    // -- biasgen -----------------------------------------------------------
    #[error("invalid bias spec: {0}")]
    BadSpec(String),
    #[error("representation undersampling would keep zero rows (p_u={0})")]
    TooFewRows(f64),
    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    // -- metrics -----------------------------------------------------------
    #[error("group '{0}' has no rows")]
    EmptyGroup(String),
    #[error("rate '{kind}' undefined for group '{group}' (zero denominator)")]
    UndefinedRate { group: String, kind: String },
    #[error("sensitive column '{0}' is not binary")]
    NonBinarySensitive(String),

    // -- fftree ------------------------------------------------------------
    #[error("branch counts do not sum to the parent counts")]
    CountMismatch,
    #[error("constraint references '{0}' which is not a sensitive column of the dataset")]
    NoSensitiveColumn(String),
    #[error("column '{0}' is categorical; encode the dataset before fitting")]
    UnencodedData(String),
    #[error("node {0} is not an internal node")]
    BadNodeId(usize),
    #[error("dataset does not match the model's feature set: {0}")]
    EncodingMismatch(String),
    #[error("invalid growth config: {0}")]
    BadConfig(String),

    // -- mitigate ----------------------------------------------------------
    #[error("empty (group={group}, label={label}) cell")]
    EmptyCell { group: String, label: u8 },
    #[error("ranker scores length {got} does not match dataset rows {want}")]
    ScoreLengthMismatch { got: usize, want: usize },
    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),
    #[error("row group '{0}' has no threshold in the policy")]
    UnknownGroup(String),

    // -- compare -----------------------------------------------------------
    #[error("beta must be > 0, got {0}")]
    BadBeta(f64),
    #[error("metric '{key}' missing from report '{model}'")]
    MissingMetric { key: String, model: String },

    // -- contrast ----------------------------------------------------------
    #[error("sensitive class '{group}' has {rows} rows, below the minimum {min}")]
    GroupTooSmall {
        group: String,
        rows: usize,
        min: usize,
    },

    // -- monitor -----------------------------------------------------------
    #[error("unknown sensitive class '{0}' in shock spec")]
    UnknownClass(String),
    #[error("{0} features exceed the exact-enumeration limit of {1}")]
    TooManyFeatures(usize, usize),
    #[error("empty background set")]
    EmptyBackground,
    #[error("model is not individually fair: flip sensitivity {0} > 0")]
    NotIndividuallyFair(f64),
    #[error("models consume different feature views: {0}")]
    ViewMismatch(String),

    // -- io ----------------------------------------------------------------
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable identifier for CLI diagnostics, independent of display text.
    pub fn name(&self) -> &'static str {
        use Error::*;
        match self {
            MissingColumn(_) => "MissingColumn",
            UnparsableValue { .. } => "UnparsableValue",
            MissingValue { .. } => "MissingValue",
            EmptyFile => "EmptyFile",
            InvalidSchema(_) => "InvalidSchema",
            DuplicateColumn(_) => "DuplicateColumn",
            DegenerateSplit { .. } => "DegenerateSplit",
            BadK { .. } => "BadK",
            NotSensitive(_) => "NotSensitive",
            NoSliceColumn(_) => "NoSliceColumn",
            NoSuchColumn(_) => "NoSuchColumn",
            NonNumericColumn(_) => "NonNumericColumn",
            UnknownColumn(_) => "UnknownColumn",
            BadSpec(_) => "BadSpec",
            TooFewRows(_) => "TooFewRows",
            LengthMismatch { .. } => "LengthMismatch",
            EmptyGroup(_) => "EmptyGroup",
            UndefinedRate { .. } => "UndefinedRate",
            NonBinarySensitive(_) => "NonBinarySensitive",
            CountMismatch => "CountMismatch",
            NoSensitiveColumn(_) => "NoSensitiveColumn",
            UnencodedData(_) => "UnencodedData",
            BadNodeId(_) => "BadNodeId",
            EncodingMismatch(_) => "EncodingMismatch",
            BadConfig(_) => "BadConfig",
            EmptyCell { .. } => "EmptyCell",
            ScoreLengthMismatch { .. } => "ScoreLengthMismatch",
            NonFiniteLoss(_) => "NonFiniteLoss",
            UnknownGroup(_) => "UnknownGroup",
            BadBeta(_) => "BadBeta",
            MissingMetric { .. } => "MissingMetric",
            GroupTooSmall { .. } => "GroupTooSmall",
            UnknownClass(_) => "UnknownClass",
            TooManyFeatures(_, _) => "TooManyFeatures",
            EmptyBackground => "EmptyBackground",
            NotIndividuallyFair(_) => "NotIndividuallyFair",
            ViewMismatch(_) => "ViewMismatch",
            Io(_) => "Io",
            Csv(_) => "Csv",
            Json(_) => "Json",
        }
    }
}
