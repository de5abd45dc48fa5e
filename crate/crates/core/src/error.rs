use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(
        "grid size n = {0} is not allowed: the standard grid needs an odd n >= 3, \
         because Riemann-sum Fourier coefficients are exact only on odd grids"
    )]
    InvalidGridSize(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("trigonometric interpolation requires the standard odd grid")]
    NonStandardGrid,

    #[error("contour {index} has {got} points, expected {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid Fourier coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("a stack needs at least one contour")]
    EmptyStack,

    #[error(
        "insufficient replicates: noise variances need at least two contours, got {contours}"
    )]
    InsufficientReplicates { contours: usize },

    #[error("flow is not strictly increasing ({0}); increase the number of integrator steps")]
    NonMonotoneFlow(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonMonotoneFlow(_) | Error::NonFinite(_))
    }
}
