use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid operator setup: {0}")]
    InvalidOperator(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A concentration went below the admissible floor; positivity was lost upstream.
    #[error("{quantity} at index {index} is {value:e}, below the admissible floor {floor:e}")]
    Domain {
        quantity: &'static str,
        index: usize,
        value: f64,
        floor: f64,
    },

    #[error("Newton diverged at t = {time}: residual {residual:e} after {iterations} iterations")]
    NewtonDiverged {
        time: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("sparse linear solve failed: {0}")]
    LinearSolve(String),

    #[error("rate fit unreliable: only {usable} usable points (need 3)")]
    RateFitUnreliable { usable: usize },

    #[error("{which} order {observed:.3} fell below the expected {expected:.1} by more than 0.3")]
    OrderRegression {
        which: &'static str,
        observed: f64,
        expected: f64,
    },

    #[error("configuration invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    /// A failure inside one run of a sweep.
    #[error("{name} = {value}: {source}")]
    AtParameter {
        name: &'static str,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI failure records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGeometry(_) => "InvalidGeometry",
            Error::InvalidOperator(_) => "InvalidOperator",
            Error::InvalidParams(_) => "InvalidParams",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::Domain { .. } => "Domain",
            Error::NewtonDiverged { .. } => "NewtonDiverged",
            Error::LinearSolve(_) => "LinearSolve",
            Error::RateFitUnreliable { .. } => "RateFitUnreliable",
            Error::OrderRegression { .. } => "OrderRegression",
            Error::Config(_) => "Config",
            Error::AtParameter { source, .. } => source.kind(),
            Error::Checkpoint(_) => "Checkpoint",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// Tags the error with the sweep parameter value it occurred at.
    pub fn at(self, name: &'static str, value: f64) -> Error {
        Error::AtParameter {
            name,
            value,
            source: Box::new(self),
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
