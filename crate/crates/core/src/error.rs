use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("label {label} is outside the domain of the {loss} loss (expected -1 or +1)")]
    LabelDomain { loss: &'static str, label: f64 },

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("pool example {index} has norm {norm} which exceeds the radius {radius}")]
    OutsideRadius { index: usize, norm: f64, radius: f64 },

    #[error("pool example {index} has zero norm and cannot be rescaled")]
    ZeroNormCandidate { index: usize },

    #[error("non-finite weights after step {step}")]
    NumericOverflow { step: u64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("target direction is not in the span of the pool: residual {residual:.3e} exceeds {threshold:.3e}")]
    SpanViolation { residual: f64, threshold: f64 },

    #[error("iteration {iteration}: {source}")]
    Teaching {
        iteration: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("trace contains no pool indices to replay")]
    NoPoolIndices,

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::InvalidArgument(_) => 2,
            Error::Teaching { .. }
            | Error::SpanViolation { .. }
            | Error::Precondition(_)
            | Error::NumericOverflow { .. } => 3,
            _ => 1,
        }
    }

    pub(crate) fn at_iteration(self, iteration: u64) -> Error {
        match self {
            e @ Error::Teaching { .. } => e,
            e => Error::Teaching {
                iteration,
                source: Box::new(e),
            },
        }
    }
}
