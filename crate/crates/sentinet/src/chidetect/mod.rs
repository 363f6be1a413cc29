//! Per-sensor windowed chi-square attack detection: residual variance
//! bounds, distance measures over a sliding window, FAR-derived thresholds,
//! and hypothesis decisions.

mod gamma;

pub use gamma::{ln_gamma, reg_lower_gamma, threshold_from_far};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::gainsynth::{build_dbar_h, build_dh, GainSet};
use crate::matcore::{
    kron, solve_discrete_lyapunov, spectral_radius, two_norm, Mat, MatError,
};

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error("norm bound inapplicable: ‖Ā‖₂ = {b} >= 1; use the exact covariance method")]
    BoundInapplicable { b: f64 },
    #[error("error dynamics unstable: spectral radius {rho} >= 1")]
    Unstable { rho: f64 },
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// Which route produced the residual variance levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    /// Norm bound Φ = (a₁N‖Q‖₂ + a₂a₃‖R‖₂)/(N(1-b²)), valid only for b < 1.
    PaperBound,
    /// Exact steady-state covariance from the Lyapunov recursion.
    LyapunovExact,
}

/// Residual variance levels Λ_i plus the scalars behind them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceBound {
    pub phi: f64,
    pub lambda: Vec<f64>,
    pub b: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub method: BoundMethod,
}

/// Guard against division blow-up for degenerate noise-free configs.
const LAMBDA_FLOOR: f64 = 1e-12;

/// Scaled norm bound on the steady-state error covariance and the per-sensor
/// residual variance levels Λ_i = H_i·(Φ·I)·H_iᵀ + R_i.
#[allow(clippy::too_many_arguments)]
pub fn compute_phi_paper_bound(
    abar: &Mat,
    k: &Mat,
    h_rows: &[Vec<f64>],
    q: &Mat,
    r_list: &[f64],
) -> Result<VarianceBound, DetectError> {
    let n_sensors = h_rows.len();
    let b = two_norm(abar, 1e-9)?;
    if b >= 1.0 {
        return Err(DetectError::BoundInapplicable { b });
    }
    let dh = build_dh(h_rows);
    let dim = dh.rows();
    let i_minus_kdh = Mat::identity(dim).sub(&k.matmul(&dh));
    let a1 = two_norm(&i_minus_kdh, 1e-9)?.powi(2);
    let a2 = two_norm(k, 1e-9)?.powi(2);
    // R̄ = diag[H_iᵀR_iH_i]; a₃ relates its norm to ‖R‖₂
    let n = h_rows[0].len();
    let rbar_blocks: Vec<Mat> = h_rows
        .iter()
        .zip(r_list)
        .map(|(h, &ri)| {
            let mut b = Mat::zeros(n, n);
            for p in 0..n {
                for q in 0..n {
                    b.set(p, q, ri * h[p] * h[q]);
                }
            }
            b
        })
        .collect();
    let rbar = Mat::block_diag(&rbar_blocks);
    let r_norm = r_list.iter().cloned().fold(0.0f64, f64::max);
    let a3 = if r_norm > 0.0 {
        two_norm(&rbar, 1e-9)? / r_norm
    } else {
        0.0
    };
    let q_norm = two_norm(q, 1e-9)?;
    let nf = n_sensors as f64;
    let phi = (a1 * nf * q_norm + a2 * a3 * r_norm) / (nf * (1.0 - b * b));
    let lambda = h_rows
        .iter()
        .zip(r_list)
        .map(|(h, &ri)| {
            let hh: f64 = h.iter().map(|x| x * x).sum();
            (phi * hh + ri).max(LAMBDA_FLOOR)
        })
        .collect();
    Ok(VarianceBound {
        phi,
        lambda,
        b,
        a1,
        a2,
        a3,
        method: BoundMethod::PaperBound,
    })
}

/// Attack-free process covariance of the collective noise vector:
/// Σ = (I - K·D_H)(1_{NN}⊗Q)(I - K·D_H)ᵀ + (K·D̄_H)·R·(K·D̄_H)ᵀ.
pub fn build_attack_free_sigma(
    gains: &GainSet,
    h_rows: &[Vec<f64>],
    q: &Mat,
    r_list: &[f64],
) -> Result<Mat, MatError> {
    let sensors = h_rows.len();
    let dim = sensors * h_rows[0].len();
    let ones = Mat::new(sensors, sensors, vec![1.0; sensors * sensors])?;
    let k = gains.assemble_k();
    let dh = build_dh(h_rows);
    let dbar = build_dbar_h(h_rows);
    let i_minus_kdh = Mat::identity(dim).sub(&k.matmul(&dh));
    let q_big = kron(&ones, q)?;
    let mut r = Mat::zeros(sensors, sensors);
    for (i, &ri) in r_list.iter().enumerate() {
        r.set(i, i, ri);
    }
    let kd = k.matmul(&dbar);
    Ok(i_minus_kdh
        .matmul(&q_big)
        .matmul(&i_minus_kdh.transpose())
        .add(&kd.matmul(&r).matmul(&kd.transpose())))
}

/// Exact steady-state error covariance route: solve Ξ = ĀΞĀᵀ + Σ and read
/// Λ_i = H_i·Ξ^{ii}·H_iᵀ + R_i from the per-sensor diagonal blocks.
pub fn compute_phi_lyapunov(
    abar: &Mat,
    sigma: &Mat,
    h_rows: &[Vec<f64>],
    r_list: &[f64],
) -> Result<VarianceBound, DetectError> {
    let rho = spectral_radius(abar, 1e-9, 10_000)?;
    if rho >= 1.0 {
        return Err(DetectError::Unstable { rho });
    }
    let xi = solve_discrete_lyapunov(abar, sigma, 1e-8)?;
    let n = h_rows[0].len();
    let sensors = h_rows.len();
    let lambda: Vec<f64> = (0..sensors)
        .map(|i| {
            let block = xi.block(i * n, i * n, n, n);
            let hb = block.matvec(&h_rows[i]);
            let v: f64 = h_rows[i].iter().zip(&hb).map(|(h, x)| h * x).sum();
            (v + r_list[i]).max(LAMBDA_FLOOR)
        })
        .collect();
    let b = two_norm(abar, 1e-9)?;
    let phi = two_norm(&xi, 1e-9)? / sensors as f64;
    Ok(VarianceBound {
        phi,
        lambda,
        b,
        a1: f64::NAN,
        a2: f64::NAN,
        a3: f64::NAN,
        method: BoundMethod::LyapunovExact,
    })
}

/// One threshold with its FAR label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub far: f64,
    pub theta: f64,
}

/// Build the threshold set for a window length from a list of FARs.
pub fn threshold_table(fars: &[f64], t: usize) -> Vec<Threshold> {
    fars.iter()
        .map(|&p| Threshold {
            far: p,
            theta: threshold_from_far(p, t),
        })
        .collect()
}

/// Decision against one threshold; H1 ("attack detected") iff v >= θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub far: f64,
    pub theta: f64,
    pub attack: bool,
}

/// Hypothesis outcomes for one sensor at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub sensor: usize,
    pub step: usize,
    pub v: f64,
    pub decisions: Vec<Decision>,
}

impl Verdict {
    pub fn any_attack(&self) -> bool {
        self.decisions.iter().any(|d| d.attack)
    }
}

/// Sliding window of normalized squared residuals for one sensor. Verdicts
/// are suppressed until the window is full.
#[derive(Debug, Clone)]
pub struct DetectorState {
    sensor: usize,
    window: VecDeque<f64>,
    t: usize,
    samples_seen: usize,
    thresholds: Vec<Threshold>,
    last_v: f64,
    last_step: usize,
}

impl DetectorState {
    pub fn new(sensor: usize, t: usize, thresholds: Vec<Threshold>) -> Self {
        assert!(t >= 1);
        Self {
            sensor,
            window: VecDeque::with_capacity(t),
            t,
            samples_seen: 0,
            thresholds,
            last_v: 0.0,
            last_step: 0,
        }
    }

    pub fn window_len(&self) -> usize {
        self.t
    }

    pub fn is_warm(&self) -> bool {
        self.samples_seen >= self.t
    }

    /// Push z = r²/Λ, evict past the window, return (z, window sum).
    pub fn update_distance(&mut self, residual: f64, lambda: f64, step: usize) -> (f64, f64) {
        assert!(lambda > 0.0, "lambda must be positive");
        let z = residual * residual / lambda;
        self.window.push_back(z);
        if self.window.len() > self.t {
            self.window.pop_front();
        }
        self.samples_seen += 1;
        // exact brute-force sum over the window contents
        let v: f64 = self.window.iter().sum();
        self.last_v = v;
        self.last_step = step;
        (z, v)
    }

    /// Hypothesis outcome per configured threshold; None while warming up.
    pub fn decide(&self) -> Option<Verdict> {
        if !self.is_warm() {
            return None;
        }
        Some(Verdict {
            sensor: self.sensor,
            step: self.last_step,
            v: self.last_v,
            decisions: self
                .thresholds
                .iter()
                .map(|th| Decision {
                    far: th.far,
                    theta: th.theta,
                    attack: self.last_v >= th.theta,
                })
                .collect(),
        })
    }
}
