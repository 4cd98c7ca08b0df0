use thiserror::Error;

/// Errors raised across density evaluation, Gram assembly and the solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("derivative requested on the support boundary at x = {x}")]
    BoundaryPoint { x: f64 },

    #[error("supports do not overlap on a set of positive measure")]
    DisjointSupports,

    #[error("quadrature did not reach tolerance after {subdivisions} subdivisions (estimate {estimate}, error {error})")]
    QuadratureFailure {
        subdivisions: usize,
        estimate: f64,
        error: f64,
    },

    #[error("derivative inner product diverges: {0}")]
    InfiniteInformation(String),

    #[error("Gram matrix B is numerically zero")]
    DegenerateGram,

    #[error("direction lies in or near the null space of B (alpha'B alpha = {0})")]
    DegenerateDirection(f64),

    #[error("basis transform is singular or ill-conditioned (condition number {0})")]
    SingularTransform(f64),

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("computation cancelled")]
    Cancelled,

    #[error("entry ({i}, {j}): {source}")]
    AtEntry {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips `AtEntry` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtEntry { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures caused by the inputs rather than by numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            Error::InvalidParameter(_)
                | Error::InvalidPanel(_)
                | Error::DisjointSupports
                | Error::InfiniteInformation(_)
                | Error::InvalidRange(_)
                | Error::DimensionMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
