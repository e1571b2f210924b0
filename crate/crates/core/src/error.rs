use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("at least two points are required")]
    TooFewPoints,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("node {0} has zero degree")]
    ZeroDegree(usize),

    #[error("eigensolver did not converge after {iterations} restarts")]
    NoConvergence { iterations: usize },

    #[error("rank {rank} exceeds min(d, N) = {max}")]
    RankTooLarge { rank: usize, max: usize },

    #[error("random sketch has zero leading singular value")]
    DegenerateSketch,

    #[error("not a permutation of 0..{0}")]
    NotAPermutation(usize),

    #[error("no true label lies strictly inside the evaluation window")]
    EmptyInterior,

    #[error("reference matrix has zero Frobenius norm")]
    ZeroNorm,

    #[error("signal matrix has zero Frobenius norm")]
    ZeroSignal,

    #[error("comparison data carries no ordering information")]
    DegenerateBaseline,

    #[error("label {value} at index {index} is outside [0, 2pi]")]
    LabelOutOfRange { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
