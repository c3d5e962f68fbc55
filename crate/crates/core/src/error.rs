use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("index {index} out of range for population of size {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric at ({i}, {j}): {a} vs {b}")]
    NotSymmetric { i: usize, j: usize, a: f64, b: f64 },

    #[error("matrix has nonzero diagonal entry {value} at {i}")]
    NonZeroDiagonal { i: usize, value: f64 },

    #[error("spin vector entry {value} at {index} is not +1 or -1")]
    NotASpin { index: usize, value: i8 },

    #[error("population of size {n} exceeds the enumeration limit {max}")]
    PopulationTooLarge { n: usize, max: usize },

    #[error("block count {blocks} exceeds the configured cap {cap}")]
    BlockBudgetExceeded { blocks: usize, cap: usize },

    #[error("collapsed lattice of {points} points exceeds budget {budget}")]
    LatticeBudgetExceeded { points: u128, budget: u128 },

    #[error("covariate row {row} is not a member of the declared support")]
    OutsideSupport { row: usize },

    #[error("PDE grid half-width {half_width} cannot cover fields up to {required}")]
    GridTooSmall { half_width: f64, required: f64 },

    #[error("AMP iterate {value} left the PDE grid [-{half_width}, {half_width}]")]
    GridRangeExceeded { value: f64, half_width: f64 },

    #[error("limit is not differentiable here: one-sided derivatives {left} and {right}")]
    NonDifferentiablePoint { left: f64, right: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
