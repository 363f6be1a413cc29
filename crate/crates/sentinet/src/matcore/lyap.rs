//! Steady-state solver for the covariance recursion X = A X Aᵀ + S, and a
//! Cholesky-style factorization tolerant of rank-deficient PSD inputs.

use super::{spectral_radius, two_norm, Mat, MatError};

/// Solve X = abar·X·abarᵀ + sigma by doubling: after k rounds the partial sum
/// covers 2^k terms of the series Σ abarʲ·sigma·(abarʲ)ᵀ.
pub fn solve_discrete_lyapunov(abar: &Mat, sigma: &Mat, tol: f64) -> Result<Mat, MatError> {
    if !abar.is_square() || !sigma.is_square() || abar.rows() != sigma.rows() {
        return Err(MatError::NotSquare);
    }
    let rho = spectral_radius(abar, 1e-9, 10_000)?;
    if rho >= 1.0 {
        return Err(MatError::UnstableLyapunov { rho });
    }
    let mut x = sigma.clone();
    let mut m = abar.clone();
    for _ in 0..64 {
        let incr = m.matmul(&x).matmul(&m.transpose());
        let x_next = x.add(&incr).symmetrize();
        let step = incr.max_abs();
        x = x_next;
        m = m.matmul(&m);
        if step <= 1e-16 * x.max_abs().max(1.0) {
            break;
        }
    }
    // residual check against the defining recursion
    let resid = x.sub(&abar.matmul(&x).matmul(&abar.transpose())).sub(sigma);
    let rnorm = two_norm(&resid, 1e-6).unwrap_or(f64::INFINITY);
    if rnorm >= tol {
        return Err(MatError::NonConvergence { best: rnorm });
    }
    Ok(x)
}

/// Lower-triangular factor L with cov ≈ L·Lᵀ for symmetric PSD cov. Singular
/// PSD inputs get a diagonal jitter of 1e-12·trace before being rejected.
pub fn cholesky_psd(cov: &Mat) -> Result<Mat, MatError> {
    if !cov.is_square() {
        return Err(MatError::NotSquare);
    }
    let n = cov.rows();
    let scale = cov.trace().abs().max(1.0);
    match try_cholesky(cov, 1e-10 * scale) {
        Ok(l) => Ok(l),
        Err(_) => {
            let jitter = 1e-12 * cov.trace().abs();
            let mut bumped = cov.clone();
            for i in 0..n {
                bumped.set(i, i, bumped.get(i, i) + jitter);
            }
            try_cholesky(&bumped, 1e-10 * scale)
        }
    }
}

fn try_cholesky(cov: &Mat, neg_tol: f64) -> Result<Mat, MatError> {
    let n = cov.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = cov.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d < -neg_tol {
            return Err(MatError::NotPsd { pivot: d });
        }
        let d = d.max(0.0);
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..n {
            let mut v = cov.get(i, j);
            for k in 0..j {
                v -= l.get(i, k) * l.get(j, k);
            }
            if ljj > 0.0 {
                l.set(i, j, v / ljj);
            } else if v.abs() > neg_tol {
                return Err(MatError::NotPsd { pivot: d });
            }
        }
    }
    // sanity: factorization must reproduce cov
    let err = l.matmul(&l.transpose()).sub(cov).max_abs();
    if err > 1e-8 * cov.max_abs().max(1.0) {
        return Err(MatError::NotPsd { pivot: -err });
    }
    Ok(l)
}
