use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("edge subset does not connect all vertices")]
    NotConnected,

    #[error("vector is not in the orthogonal complement of the diagonal: |sum of blocks| = {norm:e}")]
    NotInDiagonalComplement { norm: f64 },

    #[error("node dual {vertex} has a nonzero off-diagonal block")]
    SparsityViolation { vertex: usize },

    #[error("point outside the domain: {0}")]
    OutsideDomain(String),

    #[error("invalid block: {0}")]
    InvalidBlock(String),

    #[error("invalid schedule: {}", .0.join("; "))]
    InvalidSchedule(Vec<String>),

    #[error("unsupported instance: {0}")]
    Unsupported(String),

    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error("unbounded: {0}")]
    Unbounded(String),

    #[error("duality-gap inequality violated: gap {gap:e} < lower bound {lower_bound:e}")]
    GapInequality { gap: f64, lower_bound: f64 },

    #[error("tolerance {tol:e} not reached after {iterations} iterations")]
    ToleranceNotReached { tol: f64, iterations: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
