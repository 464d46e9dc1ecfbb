use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid coefficient in element {element}: {reason}")]
    InvalidCoefficient { element: usize, reason: String },

    #[error("non-finite field value in element {element} at {point:?}")]
    Evaluation { element: usize, point: [f64; 3] },

    #[error("point {0:?} lies outside the domain")]
    OutOfDomain([f64; 3]),

    #[error("lineage mismatch: {0}")]
    Lineage(String),

    #[error("operator is not positive definite (p^T A p = {curvature:e} at iteration {iteration})")]
    NotSpd { iteration: usize, curvature: f64 },

    #[error("iteration limit reached after {iterations} iterations, relative residual {residual:e}")]
    IterationLimit { iterations: usize, residual: f64 },

    #[error("invalid pencil: {0}")]
    Pencil(String),

    #[error("every vector was dropped during orthonormalization")]
    EmptyBasis,

    #[error("dimension {dimension} exceeds the capacity limit {limit}")]
    Capacity { dimension: usize, limit: usize },

    #[error("candidate span has dimension {rank}, {required} required")]
    DegenerateSpan { rank: usize, required: usize },

    #[error("self-consistent iteration diverging at iteration {iteration}; try a smaller mixing parameter (current {mixing})")]
    Divergence { iteration: usize, mixing: f64 },

    #[error("potential is singular at {0:?}")]
    SingularPoint([f64; 3]),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("mesh refinement did not terminate within {0} edge bisections")]
    RefinementCap(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short category name used in CLI diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InvalidCoefficient { .. } => "invalid-coefficient",
            Error::Evaluation { .. } => "evaluation",
            Error::OutOfDomain(_) => "out-of-domain",
            Error::Lineage(_) => "lineage",
            Error::NotSpd { .. } => "not-spd",
            Error::IterationLimit { .. } => "iteration-limit",
            Error::Pencil(_) => "pencil",
            Error::EmptyBasis => "empty-basis",
            Error::Capacity { .. } => "capacity",
            Error::DegenerateSpan { .. } => "degenerate-span",
            Error::Divergence { .. } => "divergence",
            Error::SingularPoint(_) => "singular-point",
            Error::Parse { .. } => "parse",
            Error::RefinementCap(_) => "refinement",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
