use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("under-resolved: {0}")]
    Resolution(String),

    #[error("hole escapes its cell {cell:?}: radius {radius} >= c1*eps = {limit}")]
    Construction {
        cell: Vec<i64>,
        radius: f64,
        limit: f64,
    },

    #[error("extrapolation failed: {0}")]
    Extrapolation(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("conjugate gradients did not converge: {iterations} iterations, relative residual {residual:e}")]
    Solver { iterations: usize, residual: f64 },

    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown report column `{0}`")]
    UnknownColumn(String),

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{stage}` failed at eps = {epsilon}: {source}")]
    Stage {
        stage: &'static str,
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Solver { .. } | Error::Evaluation(_) | Error::Extrapolation(_) => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str, epsilon: f64) -> Self {
        Error::Stage {
            stage,
            epsilon,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
