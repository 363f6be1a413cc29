//! Block-diagonal gain synthesis: stabilize the coupled error dynamics while
//! keeping every sensor's isolation margin |1 - H_i K_i H_iᵀ| above a floor.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::matcore::{eigenvalues, kron, spectral_radius, GaussianSampler, Mat, MatError};

#[derive(Debug, thiserror::Error)]
pub enum GainError {
    #[error("synthesis budget exhausted: best spectral radius {report:?}")]
    Infeasible { report: InfeasibilityReport },
    #[error("gain file has {got} blocks, instance needs {expected}")]
    BlockCountMismatch { expected: usize, got: usize },
    #[error("gain block {index} has {got} entries, expected {expected}")]
    BlockSizeMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("failed to parse gain file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("gain file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// What the search achieved before giving up.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    pub best_rho: f64,
    pub margins: Vec<f64>,
    pub margin_violations: Vec<usize>,
    pub evaluations: usize,
}

/// Block-diagonal gain with recomputed stability and isolation metadata.
#[derive(Debug, Clone)]
pub struct GainSet {
    blocks: Vec<Mat>,
    c_floor: f64,
    achieved_rho: f64,
    achieved_margins: Vec<f64>,
}

impl GainSet {
    pub fn blocks(&self) -> &[Mat] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Mat {
        &self.blocks[i]
    }

    pub fn c_floor(&self) -> f64 {
        self.c_floor
    }

    pub fn achieved_rho(&self) -> f64 {
        self.achieved_rho
    }

    pub fn achieved_margins(&self) -> &[f64] {
        &self.achieved_margins
    }

    /// Assembled Nn x Nn block-diagonal K.
    pub fn assemble_k(&self) -> Mat {
        Mat::block_diag(&self.blocks)
    }

    /// Effective innovation column K_i·H_iᵀ for sensor i.
    pub fn innovation_column(&self, i: usize, h_row: &[f64]) -> Vec<f64> {
        self.blocks[i].matvec(h_row)
    }

    /// Zero gain (every block zero).
    pub fn zero(n: usize, sensors: usize, c_floor: f64) -> Self {
        Self {
            blocks: vec![Mat::zeros(n, n); sensors],
            c_floor,
            achieved_rho: f64::NAN,
            achieved_margins: vec![1.0; sensors],
        }
    }

    /// Build from explicit blocks, recomputing rho and margins.
    pub fn from_blocks(
        blocks: Vec<Mat>,
        c_floor: f64,
        a: &Mat,
        w: &Mat,
        h_rows: &[Vec<f64>],
    ) -> Result<Self, GainError> {
        let mut gs = Self {
            blocks,
            c_floor,
            achieved_rho: f64::NAN,
            achieved_margins: Vec::new(),
        };
        let abar = assemble_abar(a, w, h_rows, &gs)?;
        gs.achieved_rho = spectral_radius(&abar, 1e-9, 10_000)?;
        gs.achieved_margins = (0..h_rows.len())
            .map(|i| (1.0 - quad_form(&gs.blocks[i], &h_rows[i])).abs())
            .collect();
        Ok(gs)
    }
}

/// H_i K_i H_iᵀ for a scalar sensor row.
fn quad_form(k_block: &Mat, h_row: &[f64]) -> f64 {
    let kh = k_block.matvec(h_row);
    h_row.iter().zip(&kh).map(|(h, v)| h * v).sum()
}

/// D_H = diag[H_iᵀH_i], assembled from the sensor rows.
pub fn build_dh(h_rows: &[Vec<f64>]) -> Mat {
    let n = h_rows[0].len();
    let blocks: Vec<Mat> = h_rows
        .iter()
        .map(|h| {
            let mut b = Mat::zeros(n, n);
            for p in 0..n {
                for q in 0..n {
                    b.set(p, q, h[p] * h[q]);
                }
            }
            b
        })
        .collect();
    Mat::block_diag(&blocks)
}

/// D̄_H = diag[H_iᵀ], the Nn x N block column selector.
pub fn build_dbar_h(h_rows: &[Vec<f64>]) -> Mat {
    let n = h_rows[0].len();
    let big_n = h_rows.len();
    let mut m = Mat::zeros(big_n * n, big_n);
    for (i, h) in h_rows.iter().enumerate() {
        for p in 0..n {
            m.set(i * n + p, i, h[p]);
        }
    }
    m
}

/// Ā = (I - K·D_H)·(W⊗A).
pub fn assemble_abar(
    a: &Mat,
    w: &Mat,
    h_rows: &[Vec<f64>],
    gains: &GainSet,
) -> Result<Mat, MatError> {
    let m = kron(w, a)?;
    let dh = build_dh(h_rows);
    let k = gains.assemble_k();
    Ok(m.sub(&k.matmul(&dh.matmul(&m))))
}

/// Incremental Ā evaluation used inside the search: Ā depends on K_i only
/// through the column c_i = K_i·H_iᵀ, so the search runs over those columns.
struct AbarEval {
    m: Mat,
    /// u_i = H_i times block-row i of M, one 1 x Nn row per sensor.
    u: Vec<Vec<f64>>,
    n: usize,
    sensors: usize,
}

impl AbarEval {
    fn new(a: &Mat, w: &Mat, h_rows: &[Vec<f64>]) -> Result<Self, MatError> {
        let m = kron(w, a)?;
        let n = a.rows();
        let sensors = w.rows();
        let dim = n * sensors;
        let u: Vec<Vec<f64>> = (0..sensors)
            .map(|i| {
                (0..dim)
                    .map(|j| {
                        (0..n)
                            .map(|s| h_rows[i][s] * m.get(i * n + s, j))
                            .sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { m, u, n, sensors })
    }

    fn abar(&self, cols: &[Vec<f64>]) -> Mat {
        let mut ab = self.m.clone();
        for i in 0..self.sensors {
            for p in 0..self.n {
                let c = cols[i][p];
                if c == 0.0 {
                    continue;
                }
                let row = i * self.n + p;
                for j in 0..self.m.cols() {
                    let v = ab.get(row, j) - c * self.u[i][j];
                    ab.set(row, j, v);
                }
            }
        }
        ab
    }

    fn rho(&self, cols: &[Vec<f64>]) -> f64 {
        let ab = self.abar(cols);
        match eigenvalues(&ab, 10_000) {
            Ok(eigs) => eigs
                .into_iter()
                .map(|(re, im)| (re * re + im * im).sqrt())
                .fold(0.0f64, f64::max),
            Err(_) => f64::INFINITY,
        }
    }
}

const STABILITY_SLACK: f64 = 0.01;
// The penalty targets a margin slightly above the floor so the penalized
// optimum lands strictly feasible.
const MARGIN_PENALTY: f64 = 1e4;
const MARGIN_EPS: f64 = 1e-3;

/// Two-stage derivative-free search for a block-diagonal gain: a coarse grid
/// over a shared innovation weight, then randomized coordinate descent on the
/// effective gain columns. Deterministic given the sampler.
pub fn synthesize_gain(
    a: &Mat,
    w: &Mat,
    h_rows: &[Vec<f64>],
    c_floor: f64,
    budget: usize,
    sampler: &mut GaussianSampler,
) -> Result<GainSet, GainError> {
    let n = a.rows();
    let sensors = w.rows();
    let eval = AbarEval::new(a, w, h_rows)?;
    let h_norm2: Vec<f64> = h_rows
        .iter()
        .map(|h| h.iter().map(|x| x * x).sum())
        .collect();

    let margins = |cols: &[Vec<f64>]| -> Vec<f64> {
        (0..sensors)
            .map(|i| {
                let dot: f64 = h_rows[i].iter().zip(&cols[i]).map(|(h, c)| h * c).sum();
                (1.0 - dot).abs()
            })
            .collect()
    };
    let penalty = |ms: &[f64]| -> f64 {
        ms.iter()
            .map(|&m| {
                let v = (c_floor + MARGIN_EPS - m).max(0.0);
                MARGIN_PENALTY * v * v
            })
            .sum()
    };

    let mut evals = 0usize;

    // Stage 1: shared weight kappa in [0, 1]; columns kappa·H_iᵀ. Prefer a
    // start whose margins already clear the floor.
    let mut best_cols: Option<Vec<Vec<f64>>> = None;
    let mut best_obj = f64::INFINITY;
    let mut best_rho = f64::INFINITY;
    let mut best_feasible = false;
    for step in 0..=20 {
        if evals >= budget {
            break;
        }
        let kappa = step as f64 / 20.0;
        let cols: Vec<Vec<f64>> = h_rows.iter().map(|h| h.iter().map(|x| kappa * x).collect()).collect();
        let ms = margins(&cols);
        let feasible = ms.iter().all(|&m| m > c_floor);
        let rho = eval.rho(&cols);
        evals += 1;
        let obj = rho + penalty(&ms);
        if (feasible, std::cmp::Reverse(obj)) > (best_feasible, std::cmp::Reverse(best_obj)) {
            best_obj = obj;
            best_rho = rho;
            best_feasible = feasible;
            best_cols = Some(cols);
        }
    }
    let mut cols = best_cols.unwrap_or_else(|| vec![vec![0.0; n]; sensors]);

    // Stage 2: randomized coordinate descent with geometric step decay.
    let dim = sensors * n;
    let mut step = 0.25;
    let success = |rho: f64, ms: &[f64]| {
        rho < 1.0 - STABILITY_SLACK && ms.iter().all(|&m| m > c_floor)
    };
    'outer: while evals < budget {
        let ms = margins(&cols);
        if success(best_rho, &ms) {
            break;
        }
        let mut improved = false;
        for _ in 0..dim {
            if evals + 2 > budget {
                break 'outer;
            }
            let ms_now = margins(&cols);
            if success(best_rho, &ms_now) {
                break 'outer;
            }
            let c = (sampler.next_uniform() * dim as f64) as usize % dim;
            let (si, p) = (c / n, c % n);
            let old = cols[si][p];
            let first_sign = if sampler.next_uniform() < 0.5 { 1.0 } else { -1.0 };
            for sign in [first_sign, -first_sign] {
                cols[si][p] = old + sign * step;
                let ms_try = margins(&cols);
                let rho_try = eval.rho(&cols);
                evals += 1;
                let obj_try = rho_try + penalty(&ms_try);
                if obj_try < best_obj {
                    best_obj = obj_try;
                    best_rho = rho_try;
                    improved = true;
                    break;
                }
                cols[si][p] = old;
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-7 {
                step = 0.25;
            }
        }
    }

    let final_margins = margins(&cols);
    let blocks: Vec<Mat> = (0..sensors)
        .map(|i| {
            // K_i = c_i·H_i / (H_iH_iᵀ) so that K_i·H_iᵀ equals the searched column
            let mut b = Mat::zeros(n, n);
            for p in 0..n {
                for q in 0..n {
                    b.set(p, q, cols[i][p] * h_rows[i][q] / h_norm2[i]);
                }
            }
            b
        })
        .collect();
    let gs = GainSet::from_blocks(blocks, c_floor, a, w, h_rows)?;
    if gs.achieved_rho < 1.0 && gs.achieved_margins.iter().all(|&m| m > c_floor) {
        Ok(gs)
    } else {
        Err(GainError::Infeasible {
            report: InfeasibilityReport {
                best_rho: gs.achieved_rho,
                margin_violations: final_margins
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m <= c_floor)
                    .map(|(i, _)| i)
                    .collect(),
                margins: final_margins,
                evaluations: evals,
            },
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GainFile {
    c_floor: f64,
    seed: u64,
    /// One row-major n x n block per sensor.
    blocks: Vec<Vec<f64>>,
}

pub fn save_gain(path: &Path, gains: &GainSet, seed: u64) -> Result<(), GainError> {
    let file = GainFile {
        c_floor: gains.c_floor(),
        seed,
        blocks: gains.blocks().iter().map(|b| b.data().to_vec()).collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Load gain blocks and recompute rho/margins against the given instance;
/// nothing from the file is trusted beyond the raw blocks.
pub fn load_gain(
    path: &Path,
    a: &Mat,
    w: &Mat,
    h_rows: &[Vec<f64>],
) -> Result<GainSet, GainError> {
    let text = std::fs::read_to_string(path)?;
    let file: GainFile = serde_json::from_str(&text)?;
    let n = a.rows();
    let sensors = w.rows();
    if file.blocks.len() != sensors {
        return Err(GainError::BlockCountMismatch {
            expected: sensors,
            got: file.blocks.len(),
        });
    }
    let mut blocks = Vec::with_capacity(sensors);
    for (i, data) in file.blocks.into_iter().enumerate() {
        if data.len() != n * n {
            return Err(GainError::BlockSizeMismatch {
                index: i,
                expected: n * n,
                got: data.len(),
            });
        }
        blocks.push(Mat::new(n, n, data).map_err(GainError::Mat)?);
    }
    GainSet::from_blocks(blocks, file.c_floor, a, w, h_rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_selectors(states: &[usize], n: usize) -> Vec<Vec<f64>> {
        states
            .iter()
            .map(|&s| {
                let mut h = vec![0.0; n];
                h[s] = 1.0;
                h
            })
            .collect()
    }

    #[test]
    fn abar_with_zero_gain_is_kron() {
        let a = Mat::from_rows(&[vec![1.0, 0.3], vec![0.0, 0.8]]).unwrap();
        let w = Mat::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let h = unit_selectors(&[0, 1], 2);
        let gains = GainSet::zero(2, 2, 0.2);
        let abar = assemble_abar(&a, &w, &h, &gains).unwrap();
        assert!(abar.sub(&kron(&w, &a).unwrap()).max_abs() < 1e-15);
    }

    #[test]
    fn abar_scalar_closed_form() {
        // n = 1, N = 1: abar = (1 - kappa) a w
        let a = Mat::new(1, 1, vec![1.1]).unwrap();
        let w = Mat::identity(1);
        let h = vec![vec![1.0]];
        let kappa = 0.4;
        let gains =
            GainSet::from_blocks(vec![Mat::new(1, 1, vec![kappa]).unwrap()], 0.2, &a, &w, &h)
                .unwrap();
        let abar = assemble_abar(&a, &w, &h, &gains).unwrap();
        assert!((abar.get(0, 0) - (1.0 - kappa) * 1.1).abs() < 1e-14);
    }

    #[test]
    fn abar_matches_elementwise_definition_oracle() {
        let mut s = GaussianSampler::new(3, 0);
        let n = 2;
        let sensors = 2;
        let a = Mat::new(n, n, (0..4).map(|_| s.next_standard_normal()).collect()).unwrap();
        let w = Mat::new(sensors, sensors, (0..4).map(|_| s.next_uniform()).collect()).unwrap();
        let h = unit_selectors(&[0, 1], n);
        let blocks: Vec<Mat> = (0..sensors)
            .map(|_| Mat::new(n, n, (0..4).map(|_| s.next_standard_normal()).collect()).unwrap())
            .collect();
        let gains = GainSet::from_blocks(blocks.clone(), 0.0, &a, &w, &h).unwrap();
        let abar = assemble_abar(&a, &w, &h, &gains).unwrap();
        // definition oracle assembled entry by entry: M - K D_H M
        let m = kron(&w, &a).unwrap();
        let dh = build_dh(&h);
        let k = Mat::block_diag(&blocks);
        let dim = n * sensors;
        let kdm = k.matmul(&dh).matmul(&m);
        for i in 0..dim {
            for j in 0..dim {
                assert!((abar.get(i, j) - (m.get(i, j) - kdm.get(i, j))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn abar_linear_in_gain() {
        let mut s = GaussianSampler::new(19, 0);
        let n = 2;
        let a = Mat::new(n, n, (0..4).map(|_| s.next_standard_normal()).collect()).unwrap();
        let w = Mat::from_rows(&[vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        let h = unit_selectors(&[1, 0], n);
        let mk_blocks = |s: &mut GaussianSampler| -> Vec<Mat> {
            (0..2)
                .map(|_| Mat::new(n, n, (0..4).map(|_| s.next_standard_normal()).collect()).unwrap())
                .collect()
        };
        let b1 = mk_blocks(&mut s);
        let b2 = mk_blocks(&mut s);
        let bsum: Vec<Mat> = b1.iter().zip(&b2).map(|(x, y)| x.add(y)).collect();
        let g1 = GainSet::from_blocks(b1, 0.0, &a, &w, &h).unwrap();
        let g2 = GainSet::from_blocks(b2, 0.0, &a, &w, &h).unwrap();
        let gsum = GainSet::from_blocks(bsum, 0.0, &a, &w, &h).unwrap();
        let m = kron(&w, &a).unwrap();
        let lhs = assemble_abar(&a, &w, &h, &gsum).unwrap();
        let rhs = assemble_abar(&a, &w, &h, &g1)
            .unwrap()
            .add(&assemble_abar(&a, &w, &h, &g2).unwrap())
            .sub(&m);
        assert!(lhs.sub(&rhs).max_abs() < 1e-10);
    }

    #[test]
    fn assembled_k_is_block_diagonal() {
        let n = 2;
        let blocks = vec![Mat::identity(n).scale(2.0), Mat::identity(n).scale(3.0)];
        let a = Mat::identity(n);
        let w = Mat::identity(2);
        let h = unit_selectors(&[0, 0], n);
        let gains = GainSet::from_blocks(blocks, 0.0, &a, &w, &h).unwrap();
        let k = gains.assemble_k();
        for i in 0..4 {
            for j in 0..4 {
                if i / n != j / n {
                    assert_eq!(k.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn scalar_synthesis_matches_grid_oracle() {
        // a = 1.1, w = 1, H = 1, c_floor = 0.2: kappa = 0.5 is feasible with
        // abar = 0.55, so synthesis must find rho <= 0.55 + search slack
        let a = Mat::new(1, 1, vec![1.1]).unwrap();
        let w = Mat::identity(1);
        let h = vec![vec![1.0]];
        let mut s = GaussianSampler::new(7, 0);
        let gs = synthesize_gain(&a, &w, &h, 0.2, 2000, &mut s).unwrap();
        assert!(gs.achieved_rho() < 1.0 - 0.009);
        assert!(gs.achieved_margins()[0] > 0.2);

        // independent grid-search oracle over kappa in [-2, 2]
        let mut best = f64::INFINITY;
        for i in 0..=4000 {
            let kappa = -2.0 + i as f64 * 0.001;
            if (1.0 - kappa).abs() > 0.2 {
                best = best.min(((1.0 - kappa) * 1.1).abs());
            }
        }
        assert!(best <= 0.55 + 1e-9);
        assert!(gs.achieved_rho() >= best - 1e-9);
    }

    #[test]
    fn scalar_infeasible_case_reports() {
        // c_floor = 1 forces |1-kappa| > 1 while stability needs
        // |1-kappa|·a·w < 1 with a·w = 2.5: the feasible set is empty
        let a = Mat::new(1, 1, vec![2.5]).unwrap();
        let w = Mat::identity(1);
        let h = vec![vec![1.0]];

        // grid-search oracle confirms emptiness
        for i in 0..=4000 {
            let kappa = -2.0 + i as f64 * 0.001;
            let feasible = (1.0 - kappa).abs() > 1.0 && ((1.0 - kappa) * 2.5).abs() < 1.0;
            assert!(!feasible);
        }

        let mut s = GaussianSampler::new(7, 0);
        match synthesize_gain(&a, &w, &h, 1.0, 500, &mut s) {
            Err(GainError::Infeasible { report }) => {
                assert!(report.best_rho >= 1.0 || !report.margin_violations.is_empty());
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn gain_file_roundtrip_and_mismatch() {
        let a = Mat::from_rows(&[vec![1.0, 0.2], vec![0.1, 0.9]]).unwrap();
        let w = Mat::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let h = unit_selectors(&[0, 1], 2);
        let blocks = vec![
            Mat::from_rows(&[vec![0.3, 0.0], vec![0.1, 0.0]]).unwrap(),
            Mat::from_rows(&[vec![0.0, 0.2], vec![0.0, 0.4]]).unwrap(),
        ];
        let gs = GainSet::from_blocks(blocks, 0.1, &a, &w, &h).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gain.json");
        save_gain(&path, &gs, 99).unwrap();
        let loaded = load_gain(&path, &a, &w, &h).unwrap();
        for (b1, b2) in gs.blocks().iter().zip(loaded.blocks()) {
            assert_eq!(b1.data(), b2.data());
        }
        assert!((gs.achieved_rho() - loaded.achieved_rho()).abs() < 1e-12);

        // wrong block count: three-sensor instance
        let w3 = Mat::identity(3);
        let h3 = unit_selectors(&[0, 1, 0], 2);
        assert!(matches!(
            load_gain(&path, &a, &w3, &h3),
            Err(GainError::BlockCountMismatch { .. })
        ));
    }
}
