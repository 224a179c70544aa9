use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("matrix entries must be finite")]
    NotFinite,
    #[error("basis is not linearly independent (smallest Gram eigenvalue {min:.3e}, largest {max:.3e})")]
    LinearlyDependent { min: f64, max: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("operation needs square matrices, got shape {0}x{1}")]
    NonSquare(usize, usize),
    #[error("functional is degenerate on the subspace (nullity {nullity})")]
    DegenerateForm { nullity: usize },
    #[error("no certificate: {0}")]
    NoCertificate(String),
    #[error("map is singular (smallest singular value {0:.3e})")]
    Singular(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
