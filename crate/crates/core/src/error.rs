use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("observable is not Hermitian: max |A - A^dag| = {residual:e} (limit {limit:e})")]
    NonHermitian { residual: f64, limit: f64 },

    #[error("{which} state is not normalized: norm = {norm}")]
    NonNormalized { which: &'static str, norm: f64 },

    #[error("vanishing overlap: |<psi_f|psi_i>| = {overlap:e} is below the floor {floor:e}")]
    VanishingOverlap { overlap: f64, floor: f64 },

    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch { what: &'static str, got: usize, expected: usize },

    #[error("weak moment order must be at least 1")]
    InvalidOrder,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("pointer leaks through the grid boundary: edge/peak amplitude ratio {ratio:e}")]
    BoundaryLeak { ratio: f64 },

    #[error("translation overflow: |gamma| * max|a_j| = {shift} exceeds L/8 = {limit}")]
    TranslationOverflow { shift: f64, limit: f64 },

    #[error("epsilon must be strictly positive, got {0}")]
    NonPositiveEpsilon(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
