use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point ({x}, {y}) lies outside the reference domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("parameter coordinate {index} = {value} lies outside [-1, 1]")]
    ParameterOutOfCube { index: usize, value: f64 },

    #[error("invalid atlas: c_gamma = {c_gamma} >= 1")]
    InvalidAtlas { c_gamma: f64 },

    #[error("non-positive Jacobian determinant {det} at ({x}, {y})")]
    NonPositiveJacobian { det: f64, x: f64, y: f64 },

    #[error("coefficient is not symmetric positive definite at ({x}, {y})")]
    NotSpd { x: f64, y: f64 },

    #[error("Newton inversion did not converge for target ({x}, {y}) (residual {residual})")]
    NewtonFailed { x: f64, y: f64, residual: f64 },

    #[error("inverted mapped triangle {triangle} (area {area})")]
    InvertedTriangle { triangle: usize, area: f64 },

    #[error("linear solve failed: {0}")]
    SolverFailed(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("Gram block is rank deficient: effective rank {effective_rank} of {size}")]
    RankDeficient { effective_rank: usize, size: usize },

    #[error("quadrature grid too coarse for member frequency {frequency}")]
    UnderResolved { frequency: usize },

    #[error("oracle failed at y = {y:?}: {source}")]
    Oracle {
        y: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite loss at epoch {epoch}: train {train}, validation {validation}")]
    NonFiniteLoss { epoch: usize, train: f64, validation: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by user input or configuration rather than
    /// a numerical failure.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::DimensionMismatch { .. }
            | Error::ParameterOutOfCube { .. }
            | Error::InvalidAtlas { .. }
            | Error::InvalidInput(_)
            | Error::Config(_)
            | Error::Parse(_)
            | Error::Io(_) => true,
            Error::Stage { source, .. } | Error::Oracle { source, .. } => source.is_user_error(),
            _ => false,
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Error {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
