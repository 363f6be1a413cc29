//! Self-contained dense linear algebra and probability kernels.

mod eig;
mod lyap;
mod mat;
mod rank;
mod sampler;

pub use eig::{eigenvalues, spectral_radius, two_norm, two_norm_iter};
pub use lyap::{cholesky_psd, solve_discrete_lyapunov};
pub use mat::{kron, Mat, MAX_DIM};
pub use rank::numeric_rank;
pub use sampler::{sample_gaussian_vec, CovFactor, GaussianSampler};

/// Default tolerance for norms and spectral radii.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default iteration cap for the iterative kernels.
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum MatError {
    #[error("matrix dimensions must be positive")]
    EmptyDimension,
    #[error("matrix dimensions {rows}x{cols} exceed the configured maximum")]
    DimensionOverflow { rows: usize, cols: usize },
    #[error("entry count {got} does not match rows*cols = {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("matrix entries must be finite")]
    NonFiniteEntry,
    #[error("rows have inconsistent lengths")]
    RaggedRows,
    #[error("operation requires a square matrix")]
    NotSquare,
    #[error("iteration did not converge; best estimate {best}")]
    NonConvergence { best: f64 },
    #[error("matrix is not positive semidefinite (pivot {pivot})")]
    NotPsd { pivot: f64 },
    #[error("Lyapunov recursion diverges: spectral radius {rho} >= 1")]
    UnstableLyapunov { rho: f64 },
}
