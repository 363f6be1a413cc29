//! Single time-scale distributed estimator: one neighbor-fusion exchange on
//! priors per step, then a purely local innovation update per sensor.

use crate::gainsynth::GainSet;
use crate::matcore::Mat;
use crate::sysmodel::SensorSuite;

/// Per-sensor priors and posteriors for one time step.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    priors: Vec<Vec<f64>>,
    posteriors: Vec<Vec<f64>>,
    step: usize,
}

impl EstimatorState {
    /// All posteriors start at zero.
    pub fn new(sensors: usize, n: usize) -> Self {
        Self {
            priors: vec![vec![0.0; n]; sensors],
            posteriors: vec![vec![0.0; n]; sensors],
            step: 0,
        }
    }

    /// Warm start from given per-sensor posteriors.
    pub fn from_posteriors(posteriors: Vec<Vec<f64>>) -> Self {
        let n = posteriors[0].len();
        let sensors = posteriors.len();
        Self {
            priors: vec![vec![0.0; n]; sensors],
            posteriors,
            step: 0,
        }
    }

    pub fn prior(&self, sensor: usize) -> &[f64] {
        &self.priors[sensor]
    }

    /// Add the same perturbation to every sensor's prior (e.g. a shared
    /// process-noise term when iterating the recursion in error coordinates).
    pub fn add_to_priors(&mut self, delta: &[f64]) {
        for prior in &mut self.priors {
            for (p, d) in prior.iter_mut().zip(delta) {
                *p += d;
            }
        }
    }

    pub fn posterior(&self, sensor: usize) -> &[f64] {
        &self.posteriors[sensor]
    }

    pub fn posteriors(&self) -> &[Vec<f64>] {
        &self.posteriors
    }

    pub fn step(&self) -> usize {
        self.step
    }
}

/// One residual sample at one sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRecord {
    pub sensor: usize,
    pub step: usize,
    pub residual: f64,
}

/// Consensus prediction: prior_i = sum_j w_ij · A · posterior_j, reading only
/// in-neighbor posteriors (w_ij nonzero).
pub fn predict(st: &mut EstimatorState, w: &Mat, a: &Mat) {
    let sensors = st.posteriors.len();
    // A·posterior_j computed once per sensor, then mixed by the fusion row
    let propagated: Vec<Vec<f64>> = st.posteriors.iter().map(|p| a.matvec(p)).collect();
    for i in 0..sensors {
        let mut prior = vec![0.0; a.rows()];
        for j in 0..sensors {
            let wij = w.get(i, j);
            if wij == 0.0 {
                continue;
            }
            for (acc, v) in prior.iter_mut().zip(&propagated[j]) {
                *acc += wij * v;
            }
        }
        st.priors[i] = prior;
    }
    st.step += 1;
}

/// Local innovation: posterior_i = prior_i + K_i·H_iᵀ·(y_i - H_i·prior_i).
/// No inter-sensor communication happens here.
pub fn correct(st: &mut EstimatorState, gains: &GainSet, y: &[f64], suite: &SensorSuite) {
    for i in 0..st.priors.len() {
        let innovation = y[i] - suite.apply(i, &st.priors[i]);
        let col = gains.innovation_column(i, suite.h_row(i));
        st.posteriors[i] = st.priors[i]
            .iter()
            .zip(&col)
            .map(|(p, c)| p + c * innovation)
            .collect();
    }
}

/// Residuals r_i = y_i - H_i·posterior_i for the current step.
pub fn residual(st: &EstimatorState, y: &[f64], suite: &SensorSuite) -> Vec<ResidualRecord> {
    (0..st.posteriors.len())
        .map(|i| ResidualRecord {
            sensor: i,
            step: st.step,
            residual: y[i] - suite.apply(i, &st.posteriors[i]),
        })
        .collect()
}

/// Per-sensor mean squared error ‖x_k - posterior_k^i‖²/n for each recorded
/// step. `posterior_history[k][i]` is sensor i's posterior at step k.
pub fn error_trace(truth: &[Vec<f64>], posterior_history: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    truth
        .iter()
        .zip(posterior_history)
        .map(|(x, posts)| {
            posts
                .iter()
                .map(|p| {
                    let n = x.len() as f64;
                    x.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gainsynth::GainSet;
    use crate::matcore::{kron, GaussianSampler};
    use crate::netgraph::SensingPattern;
    use crate::sysmodel::SensorSuite;

    fn selectors(states: &[usize], n: usize) -> SensorSuite {
        let sp = SensingPattern::new(states.to_vec(), n).unwrap();
        SensorSuite::from_pattern(&sp, n, vec![0.06; states.len()]).unwrap()
    }

    #[test]
    fn predict_single_sensor_is_propagation() {
        let a = Mat::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let w = Mat::identity(1);
        let mut st = EstimatorState::new(1, 2);
        st.posteriors[0] = vec![2.0, 3.0];
        predict(&mut st, &w, &a);
        assert_eq!(st.prior(0), &[5.0, 3.0]);
    }

    #[test]
    fn predict_consensus_fixed_point() {
        // all posteriors equal v: every prior is A·v because rows of W sum to 1
        let a = Mat::from_rows(&[vec![0.9, 0.2], vec![0.1, 0.8]]).unwrap();
        let w = Mat::from_rows(&[
            vec![0.5, 0.3, 0.2],
            vec![0.2, 0.6, 0.2],
            vec![0.4, 0.1, 0.5],
        ])
        .unwrap();
        let v = vec![1.5, -0.5];
        let mut st = EstimatorState::new(3, 2);
        for p in &mut st.posteriors {
            *p = v.clone();
        }
        predict(&mut st, &w, &a);
        let av = a.matvec(&v);
        for i in 0..3 {
            for c in 0..2 {
                assert!((st.prior(i)[c] - av[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn predict_matches_kronecker_form_oracle() {
        let mut s = GaussianSampler::new(2, 0);
        let n = 3;
        let sensors = 2;
        let a = Mat::new(n, n, (0..9).map(|_| s.next_standard_normal()).collect()).unwrap();
        let w = Mat::from_rows(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let mut st = EstimatorState::new(sensors, n);
        for p in &mut st.posteriors {
            for v in p.iter_mut() {
                *v = s.next_standard_normal();
            }
        }
        let stacked: Vec<f64> = st.posteriors.concat();
        let m = kron(&w, &a).unwrap();
        let expect = m.matvec(&stacked);
        predict(&mut st, &w, &a);
        for i in 0..sensors {
            for c in 0..n {
                assert!((st.prior(i)[c] - expect[i * n + c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correct_zero_innovation_keeps_prior() {
        let suite = selectors(&[1], 2);
        let a = Mat::identity(2);
        let w = Mat::identity(1);
        let gains = GainSet::from_blocks(
            vec![Mat::identity(2).scale(0.5)],
            0.0,
            &a,
            &w,
            suite.h_rows(),
        )
        .unwrap();
        let mut st = EstimatorState::new(1, 2);
        st.priors[0] = vec![3.0, -1.0];
        let y = vec![-1.0]; // equals H·prior
        correct(&mut st, &gains, &y, &suite);
        assert_eq!(st.posterior(0), &[3.0, -1.0]);
    }

    #[test]
    fn correct_zero_gain_keeps_prior() {
        let suite = selectors(&[0], 2);
        let gains = GainSet::zero(2, 1, 0.0);
        let mut st = EstimatorState::new(1, 2);
        st.priors[0] = vec![1.0, 2.0];
        correct(&mut st, &gains, &[10.0], &suite);
        assert_eq!(st.posterior(0), &[1.0, 2.0]);
    }

    #[test]
    fn correct_scalar_closed_form() {
        let suite = selectors(&[0], 1);
        let a = Mat::new(1, 1, vec![1.0]).unwrap();
        let w = Mat::identity(1);
        let kappa = 0.3;
        let gains = GainSet::from_blocks(
            vec![Mat::new(1, 1, vec![kappa]).unwrap()],
            0.0,
            &a,
            &w,
            suite.h_rows(),
        )
        .unwrap();
        let mut st = EstimatorState::new(1, 1);
        st.priors[0] = vec![2.0];
        correct(&mut st, &gains, &[5.0], &suite);
        // posterior = prior + kappa (y - prior)
        assert!((st.posterior(0)[0] - (2.0 + kappa * 3.0)).abs() < 1e-15);
    }

    #[test]
    fn residual_cases() {
        let suite = selectors(&[0], 2);
        let mut st = EstimatorState::new(1, 2);
        st.posteriors[0] = vec![4.0, 0.0];
        // perfect estimate
        let r = residual(&st, &[4.0], &suite);
        assert_eq!(r[0].residual, 0.0);
        // fixed bias shifts the residual exactly
        let r = residual(&st, &[4.0 + 0.7], &suite);
        assert!((r[0].residual - 0.7).abs() < 1e-15);
    }

    #[test]
    fn error_trace_zero_when_initialized_at_truth() {
        let truth = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let history = truth.iter().map(|x| vec![x.clone()]).collect::<Vec<_>>();
        let mse = error_trace(&truth, &history);
        assert_eq!(mse, vec![vec![0.0], vec![0.0]]);
    }

    #[test]
    fn zero_gain_unstable_system_diverges() {
        // K = 0 and rho(W⊗A) > 1: MSE grows after a transient
        let a = Mat::new(1, 1, vec![1.2]).unwrap();
        let w = Mat::identity(1);
        let suite = selectors(&[0], 1);
        let gains = GainSet::zero(1, 1, 0.0);
        let mut st = EstimatorState::new(1, 1);
        let mut x = vec![1.0];
        let mut mses = Vec::new();
        for _ in 0..60 {
            x[0] *= 1.2;
            predict(&mut st, &w, &a);
            correct(&mut st, &gains, &[x[0]], &suite);
            mses.push((x[0] - st.posterior(0)[0]).powi(2));
        }
        assert!(mses[59] > mses[30] && mses[30] > mses[10]);
        assert!(mses[59] > 1e3);
    }
}
