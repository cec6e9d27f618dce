use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value {value} at ({row}, {col}) in {context}")]
    NonFinite {
        context: String,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("softmax row {0} is fully masked")]
    FullyMaskedRow(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gradient check aborted: loss is not deterministic ({first:e} then {second:e})")]
    NonDeterministicLoss { first: f64, second: f64 },

    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),

    #[error("duplicate (ticker, date) rows: {}", format_duplicates(.0))]
    DuplicateRows(Vec<(String, NaiveDate)>),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (anchor days {days:?})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        days: Vec<NaiveDate>,
    },

    #[error("daily return {value} at position {index} is <= -1 (bankrupt path)")]
    Bankrupt { index: usize, value: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad inputs or configuration rather than by
    /// a numerical failure during a run.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NonFinite { .. }
                | Error::NonFiniteLoss { .. }
                | Error::NonDeterministicLoss { .. }
                | Error::Bankrupt { .. }
                | Error::Io(_)
        )
    }
}

fn format_duplicates(rows: &[(String, NaiveDate)]) -> String {
    rows.iter()
        .map(|(t, d)| format!("{t}@{d}"))
        .collect::<Vec<_>>()
        .join(", ")
}
