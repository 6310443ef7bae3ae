use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("time step {t} out of range for schedule of length {len}")]
    StepOutOfRange { t: usize, len: usize },

    #[error("index {index} out of range for depth {depth}")]
    IndexOutOfRange { index: usize, depth: usize },

    #[error("slice budget violated: {got} slices exceeds budget {budget}")]
    BudgetViolation { got: usize, budget: usize },

    #[error("missing condition slice {index}")]
    MissingConditionSlice { index: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    /// Training abort diagnostic: carries enough to reproduce the bad step.
    #[error("non-finite loss at step {step} (t={t}, len_c={len_c}, len_p={len_p})")]
    NonFiniteLoss {
        step: usize,
        t: usize,
        len_c: usize,
        len_p: usize,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("constant volume: intensity range is zero")]
    ConstantVolume,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
