use thiserror::Error;

/// Errors raised by the geometric and transport operations.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("point ({x:?}, {xbar:?}) lies on the cut locus of cost `{cost}`")]
    CutLocus {
        cost: String,
        x: Vec<f64>,
        xbar: Vec<f64>,
    },

    #[error("finite-difference step {step:e} underflows the coordinate scale {scale:e}")]
    DegenerateStep { step: f64, scale: f64 },

    #[error("mixed Hessian is degenerate: |det| = {det:e} <= {tol:e}")]
    Degenerate { det: f64, tol: f64 },

    #[error("density must be positive, got {value:e} at {point:?}")]
    NonpositiveDensity { value: f64, point: Vec<f64> },

    #[error("plane is not spacelike (smallest Gram eigenvalue {min_eigenvalue:e})")]
    NotSpacelike { min_eigenvalue: f64 },

    #[error("frame has zero orientation: both projections are degenerate")]
    ZeroOrientation,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("symmetric part has a negative eigenvalue {0:e}")]
    NotMonotone(f64),

    #[error("cumulative distribution is flat near {0}")]
    FlatCdf(f64),

    #[error("point clouds have different sizes: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("no root of the map equation found at {point:?}: residual {residual:e}")]
    NoRoot { point: Vec<f64>, residual: f64 },

    #[error("map is not differentiable at {0:?}")]
    NotDifferentiable(Vec<f64>),

    #[error("orientation flip: det DF = {det:e} at {point:?}")]
    OrientationFlip { det: f64, point: Vec<f64> },

    #[error("point {0:?} is too close to the domain boundary for the stencil")]
    BoundaryPoint(Vec<f64>),

    #[error("metric signature {found:?} differs from the required {expected:?}")]
    BadSignature {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("mixed block has det <= 0; rotate target coordinates so -D D̄c has positive determinant")]
    NegativeOrientation,

    #[error("competitor `{name}` is not comparable: pushforward residual {residual:e} > {threshold:e}")]
    NotComparable {
        name: String,
        residual: f64,
        threshold: f64,
    },

    #[error("inconsistent simplex orientation across face {0:?}")]
    InconsistentOrientation(Vec<usize>),

    #[error("no vanishing metric component near ({x:?}, {xbar:?})")]
    NoVanishingComponent { x: Vec<f64>, xbar: Vec<f64> },

    #[error("metric component ({i},{j}) does not vanish: {value:e}")]
    NotVanishing { i: usize, j: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
