use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("operator is not hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("hilbert dimension {dim} exceeds the cap {cap}; {hint}")]
    DimensionCap {
        dim: usize,
        cap: usize,
        hint: String,
    },

    #[error("symmetry construction failed: {0}")]
    Symmetry(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("steady-state solver failed: {0}")]
    Solver(String),

    #[error("integrator step size underflow at t = {t:.6e} (dt = {dt:.3e})")]
    StepUnderflow { t: f64, dt: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
