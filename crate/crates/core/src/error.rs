use thiserror::Error;

/// Errors produced by the control library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (max |A - A^H| = {max_asymmetry:e})")]
    NotHermitian { max_asymmetry: f64 },

    #[error("matrix is not unitary (||X^H X - I||_F = {residual:e})")]
    NotUnitary { residual: f64 },

    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("qubit site {site} out of range 1..={qubits}")]
    SiteOutOfRange { site: usize, qubits: usize },

    #[error("eigendecomposition did not converge (dim {dim}, max |entry| = {max_abs:e})")]
    EigenFailure { dim: usize, max_abs: f64 },

    #[error("energy expectation has imaginary residue {residue:e}")]
    NonHermitianExpectation { residue: f64 },

    #[error("minimum eigenvalue of the energy Hamiltonian is zero")]
    ZeroGroundEnergy,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite objective or gradient at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
