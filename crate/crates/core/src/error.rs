use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("{what}: shape mismatch, expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("{what}: non-finite value at row {row}, column {col}")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("column {column} has zero variance and cannot be standardized")]
    DegenerateColumn { column: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("matrix is not positive definite even with jitter {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error(
        "index direction is unidentifiable: |beta_ols| = {norm:e}, slope F-test p-value = {p_value:.3e} \
         (an even link about the centre gives k = 0)"
    )]
    DegenerateIndex { norm: f64, p_value: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Diverged { epoch: usize },

    #[error("model schema version {found} is not supported (expected {expected})")]
    SchemaVersion { expected: u32, found: u32 },

    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(what: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            what,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
