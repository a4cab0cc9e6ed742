use crate::mesh::ElementId;

/// Errors raised by the hp-DG kernel.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("macro grid, line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("macro grid cell {cell} is not positively oriented (signed area {area:e})")]
    Orientation { cell: usize, area: f64 },

    #[error("macro grid cells {first} and {second} overlap")]
    Overlap { first: usize, second: usize },

    #[error("invalid macro grid: {0}")]
    InvalidGrid(String),

    #[error("element {0} is not a leaf of the mesh")]
    NotALeaf(ElementId),

    #[error("unknown element {0}")]
    UnknownElement(ElementId),

    #[error("refinement level limit of {0} exceeded")]
    LevelLimit(u8),

    #[error("quadrature order {0} outside the supported range 0..={max}", max = crate::quadrature::MAX_ORDER)]
    QuadratureOrder(usize),

    #[error("key {key} is not supported by the {family} family on {cell_type} cells")]
    InvalidKey {
        key: crate::basis::Key,
        family: crate::basis::FamilyKind,
        cell_type: crate::mesh::CellType,
    },

    #[error("DOF mapper is already inside an adaptation transaction")]
    NestedTransaction,

    #[error("transaction phase error: {0}")]
    TransactionPhase(&'static str),

    #[error("global index {index} out of bounds for DOF storage of length {len}")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("singular local mass matrix on element {0}")]
    SingularMass(ElementId),

    #[error("DOF vector of length {actual} does not match space dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("facet of zero length")]
    DegenerateFacet,

    #[error("conjugate gradients broke down at iteration {iteration}: non-positive curvature {curvature:e} (penalty too small?)")]
    Breakdown { iteration: usize, curvature: f64 },

    #[error("diagonal block {0} of the system matrix is not positive definite")]
    IndefiniteBlock(usize),

    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("polynomial degree {degree} on element {element} is below the required minimum {minimum}")]
    DegreeTooLow {
        element: ElementId,
        degree: usize,
        minimum: usize,
    },

    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),

    #[error("missing source degree for element {0}")]
    MissingDegree(ElementId),

    #[error("gradient of the exact solution is singular at the origin")]
    SingularPoint,

    #[error("EOC undefined: DOF count unchanged between iterations ({0})")]
    EqualDofCount(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
