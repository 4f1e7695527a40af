use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Cholesky failed; `pivot` is the zero-based index of the first non-positive pivot.
    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("singular design: columns {columns:?} are collinear with earlier columns")]
    SingularDesign { columns: Vec<String> },

    #[error("degenerate prediction: non-positive predicted hours for rows {rows:?}")]
    DegeneratePrediction { rows: Vec<usize> },

    #[error("choice model is degenerate: {0}")]
    Degenerate(String),

    #[error("specification error: {0}")]
    Specification(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}, column '{column}': {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("value out of range at line {line}, column '{column}': {message}")]
    Range {
        line: usize,
        column: String,
        message: String,
    },

    #[error("conditioning event never occurred (acceptance rate {acceptance_rate})")]
    Conditioning { acceptance_rate: f64 },

    #[error("internal consistency violated: {0}")]
    Internal(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema(_) | Error::Specification(_) => 2,
            Error::Parse { .. }
            | Error::Range { .. }
            | Error::Input(_)
            | Error::Io(_)
            | Error::SingularDesign { .. }
            | Error::DegeneratePrediction { .. }
            | Error::Degenerate(_) => 3,
            Error::Internal(_) => 5,
            Error::Domain(_)
            | Error::Shape(_)
            | Error::NotPositiveDefinite { .. }
            | Error::Conditioning { .. } => 5,
        }
    }
}
