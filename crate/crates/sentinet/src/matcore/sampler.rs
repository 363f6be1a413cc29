//! Seeded Gaussian sampling. A (seed, stream) pair fully determines the
//! sample sequence, so runs are reproducible bit-for-bit across platforms.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cholesky_psd, Mat, MatError};

/// Deterministic normal-variate source. Distinct stream ids give independent
/// sequences off the same seed; never share one sampler across workers.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    rng: ChaCha8Rng,
    seed: u64,
    stream: u64,
    spare: Option<f64>,
}

impl GaussianSampler {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            seed,
            stream,
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform in (0, 1].
    pub fn next_uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11; // 53 random bits
        1.0 - (bits as f64) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via the Box-Muller transform (pairwise, with cache).
    pub fn next_standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let ang = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * ang.sin());
        r * ang.cos()
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.next_standard_normal();
        }
    }
}

/// mean + L·w with L a Cholesky-style factor of cov and w standard normal.
pub fn sample_gaussian_vec(
    s: &mut GaussianSampler,
    mean: &[f64],
    cov: &Mat,
) -> Result<Vec<f64>, MatError> {
    if cov.rows() != mean.len() || !cov.is_square() {
        return Err(MatError::NotSquare);
    }
    let l = cholesky_psd(cov)?;
    let mut w = vec![0.0; mean.len()];
    s.fill_standard_normal(&mut w);
    let lw = l.matvec(&w);
    Ok(mean.iter().zip(lw).map(|(m, x)| m + x).collect())
}

/// Pre-factored covariance for hot sampling loops.
#[derive(Debug, Clone)]
pub struct CovFactor {
    l: Mat,
}

impl CovFactor {
    pub fn new(cov: &Mat) -> Result<Self, MatError> {
        Ok(Self {
            l: cholesky_psd(cov)?,
        })
    }

    pub fn sample(&self, s: &mut GaussianSampler, mean: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.l.rows()];
        s.fill_standard_normal(&mut w);
        let lw = self.l.matvec(&w);
        mean.iter().zip(lw).map(|(m, x)| m + x).collect()
    }
}
