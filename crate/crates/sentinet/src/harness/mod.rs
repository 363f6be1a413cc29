//! Orchestration: scenario configuration, the full estimate-detect pipeline,
//! FAR calibration, offline detection, and trace persistence.
//!
//! Determinism contract: every random draw comes from a `GaussianSampler`
//! whose (seed, stream) pair is derived from the config. Stream 0 of the run
//! seed draws the system matrix, stream 1 the fusion weights; replication r
//! uses streams 10 + 2r (truth) and 11 + 2r (measurements). The gain search
//! runs on stream 2 of the gain seed. Same config, same bytes out.

pub mod trace;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chidetect::{
    build_attack_free_sigma, compute_phi_lyapunov, compute_phi_paper_bound, threshold_table,
    DetectError, DetectorState, Threshold, VarianceBound, Verdict,
};
use crate::estimator::{correct, predict, residual, EstimatorState};
use crate::gainsynth::{assemble_abar, load_gain, save_gain, synthesize_gain, GainError, GainSet};
use crate::matcore::{GaussianSampler, Mat, MatError};
use crate::netgraph::{
    build_row_stochastic_w, check_lemma1, check_lemma2, selector_dh,
    verify_distributed_observability, Digraph, GraphError, SensingPattern, WeightRule,
    OBSV_DIM_CAP,
};
use crate::sysmodel::{
    make_random_system, measurement_noise, AttackSchedule, Episode, ModelError, SensorSuite,
    SocialSystem,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("state digraph fails SCC coverage; uncovered components: {uncovered:?}")]
    Lemma1Failed { uncovered: Vec<Vec<usize>> },
    #[error("sensor network is not strongly connected")]
    Lemma2Failed,
    #[error("trace file {0} does not match the expected schema")]
    TraceSchema(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

const STREAM_SYSTEM: u64 = 0;
const STREAM_WEIGHTS: u64 = 1;
const STREAM_GAIN: u64 = 2;

fn truth_stream(rep: usize) -> u64 {
    10 + 2 * rep as u64
}

fn meas_stream(rep: usize) -> u64 {
    11 + 2 * rep as u64
}

/// Digraph in config form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

impl GraphSpec {
    pub fn build(&self) -> Result<Digraph, HarnessError> {
        Ok(Digraph::new(self.nodes, &self.edges)?)
    }

    pub fn from_digraph(g: &Digraph) -> Self {
        Self {
            nodes: g.nodes(),
            edges: g.edges().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemBlock {
    pub graph: GraphSpec,
    pub target_rho: f64,
    /// Q = q_scale · I; mutually exclusive with `q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_scale: Option<f64>,
    /// Full process covariance, row-major square matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
}

/// Sensor network: the cycle preset or an explicit digraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GnSpec {
    Preset(String),
    Graph(GraphSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorsBlock {
    /// State index observed by each sensor (unit-selector rows).
    pub assignments: Vec<usize>,
    /// Measurement noise variance per sensor.
    pub r: Vec<f64>,
    pub gn: GnSpec,
    #[serde(default = "default_weight_rule")]
    pub weight_rule: WeightRule,
}

fn default_weight_rule() -> WeightRule {
    WeightRule::Random
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainBlock {
    pub c_floor: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    pub seed: u64,
    /// Load blocks from this file instead of synthesizing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_file: Option<PathBuf>,
}

fn default_budget() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorBlock {
    pub t: usize,
    pub fars: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunBlock {
    pub steps: usize,
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_replications() -> usize {
    1
}

/// One attack episode in config form; `std_dev` is the standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub sensor: usize,
    pub start: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
    pub mean: f64,
    pub std_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub system: SystemBlock,
    pub sensors: SensorsBlock,
    pub gain: GainBlock,
    pub detector: DetectorBlock,
    pub run: RunBlock,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
}

impl ScenarioConfig {
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors.assignments.len()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let cfg_err = |m: String| Err(HarnessError::Config(m));
        let n = self.system.graph.nodes;
        if n == 0 {
            return cfg_err("state digraph must have at least one node".into());
        }
        match (&self.system.q_scale, &self.system.q) {
            (Some(s), None) => {
                if *s < 0.0 {
                    return cfg_err(format!("q_scale must be nonnegative, got {s}"));
                }
            }
            (None, Some(rows)) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return cfg_err(format!("q must be a {n}x{n} matrix"));
                }
            }
            _ => return cfg_err("exactly one of q_scale or q must be set".into()),
        }
        if self.system.target_rho <= 0.0 {
            return cfg_err(format!(
                "target_rho must be positive, got {}",
                self.system.target_rho
            ));
        }
        let sensors = self.sensors.assignments.len();
        if sensors == 0 {
            return cfg_err("at least one sensor assignment is required".into());
        }
        if let Some(&bad) = self.sensors.assignments.iter().find(|&&s| s >= n) {
            return cfg_err(format!("sensor assignment {bad} out of range (n = {n})"));
        }
        if self.sensors.r.len() != sensors {
            return cfg_err(format!(
                "expected {sensors} noise variances, got {}",
                self.sensors.r.len()
            ));
        }
        if let Some(&bad) = self.sensors.r.iter().find(|&&r| r <= 0.0) {
            return cfg_err(format!("noise variances must be positive, got {bad}"));
        }
        match &self.sensors.gn {
            GnSpec::Preset(name) if name == "cycle" => {}
            GnSpec::Preset(name) => {
                return cfg_err(format!("unknown sensor network preset \"{name}\""))
            }
            GnSpec::Graph(g) => {
                if g.nodes != sensors {
                    return cfg_err(format!(
                        "sensor network has {} nodes but there are {sensors} sensors",
                        g.nodes
                    ));
                }
            }
        }
        if self.gain.c_floor < 0.0 {
            return cfg_err(format!(
                "c_floor must be nonnegative, got {}",
                self.gain.c_floor
            ));
        }
        if self.gain.budget == 0 {
            return cfg_err("gain search budget must be positive".into());
        }
        if self.detector.t < 1 {
            return cfg_err("window length t must be at least 1".into());
        }
        if self.detector.fars.is_empty() {
            return cfg_err("at least one FAR is required".into());
        }
        if let Some(&bad) = self
            .detector
            .fars
            .iter()
            .find(|&&p| !(p > 0.0 && p < 1.0))
        {
            return cfg_err(format!("FARs must lie in (0, 1), got {bad}"));
        }
        if self.run.steps < self.detector.t {
            return cfg_err(format!(
                "steps ({}) must be at least the window length ({})",
                self.run.steps, self.detector.t
            ));
        }
        if self.run.replications == 0 {
            return cfg_err("replications must be at least 1".into());
        }
        for a in &self.attacks {
            if a.sensor >= sensors {
                return cfg_err(format!("attack sensor {} out of range", a.sensor));
            }
            if let Some(end) = a.end {
                if a.start > end {
                    return cfg_err(format!(
                        "attack on sensor {} has start {} > end {end}",
                        a.sensor, a.start
                    ));
                }
            }
            if a.std_dev < 0.0 {
                return cfg_err(format!(
                    "attack std_dev must be nonnegative, got {}",
                    a.std_dev
                ));
            }
        }
        Ok(())
    }

    fn attack_schedule(&self) -> Result<AttackSchedule, HarnessError> {
        let mut per_sensor = vec![Vec::new(); self.sensor_count()];
        for a in &self.attacks {
            per_sensor[a.sensor].push(Episode {
                start: a.start,
                end: a.end,
                mean: a.mean,
                std_dev: a.std_dev,
            });
        }
        Ok(AttackSchedule::new(per_sensor)?)
    }

    fn gn_graph(&self) -> Result<Digraph, HarnessError> {
        match &self.sensors.gn {
            GnSpec::Preset(_) => Ok(Digraph::cycle(self.sensor_count())),
            GnSpec::Graph(g) => g.build(),
        }
    }

    fn q_matrix(&self) -> Result<Mat, HarnessError> {
        let n = self.system.graph.nodes;
        match (&self.system.q_scale, &self.system.q) {
            (Some(s), None) => Ok(Mat::identity(n).scale(*s)),
            (None, Some(rows)) => Ok(Mat::from_rows(rows)?),
            _ => Err(HarnessError::Config(
                "exactly one of q_scale or q must be set".into(),
            )),
        }
    }
}

/// Structural and numeric observability verdicts for a config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub lemma1_holds: bool,
    pub uncovered_sccs: Vec<Vec<usize>>,
    pub lemma2_holds: bool,
    /// Numeric (W⊗A, D_H) rank verdict; None when the instance exceeds the
    /// dense-check size cap.
    pub observable: Option<bool>,
}

/// Run the structural checks plus (size permitting) the numeric observability
/// rank test on the same random (A, W) draw the simulation would use.
pub fn cmd_check(cfg: &ScenarioConfig) -> Result<CheckReport, HarnessError> {
    cfg.validate()?;
    let graph = cfg.system.graph.build()?.with_self_loops();
    let n = graph.nodes();
    let sp = SensingPattern::new(cfg.sensors.assignments.clone(), n)?;
    let cov = check_lemma1(&graph, &sp)?;
    let gn = cfg.gn_graph()?;
    let lemma2 = check_lemma2(&gn.with_self_loops());
    let observable = if cov.holds && lemma2 && cfg.sensor_count() * n <= OBSV_DIM_CAP {
        let mut sys_sampler = GaussianSampler::new(cfg.run.seed, STREAM_SYSTEM);
        let sys = make_random_system(&graph, cfg.system.target_rho, cfg.q_matrix()?, &mut sys_sampler)?;
        let mut w_sampler = GaussianSampler::new(cfg.run.seed, STREAM_WEIGHTS);
        let w = build_row_stochastic_w(&gn, cfg.sensors.weight_rule, &mut w_sampler);
        let dh = selector_dh(&sp, n);
        Some(verify_distributed_observability(sys.a(), &w, &dh)?)
    } else {
        None
    };
    Ok(CheckReport {
        lemma1_holds: cov.holds,
        uncovered_sccs: cov.uncovered,
        lemma2_holds: lemma2,
        observable,
    })
}

/// A fully prepared problem instance: system, sensors, fusion weights, gain,
/// error dynamics, variance levels, and thresholds.
pub struct Instance {
    pub sys: SocialSystem,
    pub suite: SensorSuite,
    pub w: Mat,
    pub gains: GainSet,
    pub abar: Mat,
    pub bound: VarianceBound,
    pub thresholds: Vec<Threshold>,
    pub schedule: AttackSchedule,
    pub t: usize,
    pub observable: Option<bool>,
}

/// Steps of the pipeline up to (and including) gain and threshold design.
/// Hard-errors if either network-structure condition fails.
pub fn prepare_instance(cfg: &ScenarioConfig) -> Result<Instance, HarnessError> {
    cfg.validate()?;
    let graph = cfg.system.graph.build()?.with_self_loops();
    let n = graph.nodes();
    let sp = SensingPattern::new(cfg.sensors.assignments.clone(), n)?;
    let cov = check_lemma1(&graph, &sp)?;
    if !cov.holds {
        return Err(HarnessError::Lemma1Failed {
            uncovered: cov.uncovered,
        });
    }
    let gn = cfg.gn_graph()?;
    if !check_lemma2(&gn.with_self_loops()) {
        return Err(HarnessError::Lemma2Failed);
    }
    let mut sys_sampler = GaussianSampler::new(cfg.run.seed, STREAM_SYSTEM);
    let sys = make_random_system(&graph, cfg.system.target_rho, cfg.q_matrix()?, &mut sys_sampler)?;
    let mut w_sampler = GaussianSampler::new(cfg.run.seed, STREAM_WEIGHTS);
    let w = build_row_stochastic_w(&gn, cfg.sensors.weight_rule, &mut w_sampler);
    let suite = SensorSuite::from_pattern(&sp, n, cfg.sensors.r.clone())?;
    let observable = if cfg.sensor_count() * n <= OBSV_DIM_CAP {
        let dh = selector_dh(&sp, n);
        Some(verify_distributed_observability(sys.a(), &w, &dh)?)
    } else {
        None
    };
    let gains = match &cfg.gain.gain_file {
        Some(path) => load_gain(path, sys.a(), &w, suite.h_rows())?,
        None => {
            let mut gain_sampler = GaussianSampler::new(cfg.gain.seed, STREAM_GAIN);
            synthesize_gain(
                sys.a(),
                &w,
                suite.h_rows(),
                cfg.gain.c_floor,
                cfg.gain.budget,
                &mut gain_sampler,
            )?
        }
    };
    let abar = assemble_abar(sys.a(), &w, suite.h_rows(), &gains)?;
    // norm bound first; exact covariance when ‖Ā‖₂ >= 1 makes it vacuous
    let bound = match compute_phi_paper_bound(
        &abar,
        &gains.assemble_k(),
        suite.h_rows(),
        sys.q(),
        suite.r_all(),
    ) {
        Ok(b) => b,
        Err(DetectError::BoundInapplicable { .. }) => {
            let sigma = build_attack_free_sigma(&gains, suite.h_rows(), sys.q(), suite.r_all())?;
            compute_phi_lyapunov(&abar, &sigma, suite.h_rows(), suite.r_all())?
        }
        Err(e) => return Err(e.into()),
    };
    let thresholds = threshold_table(&cfg.detector.fars, cfg.detector.t);
    Ok(Instance {
        sys,
        suite,
        w,
        gains,
        abar,
        bound,
        thresholds,
        schedule: cfg.attack_schedule()?,
        t: cfg.detector.t,
        observable,
    })
}

/// Everything one replication produced, indexed `[step - 1]` (steps start at
/// 1; the initial condition is `truth[0]` at step 0).
pub struct ReplicationTrace {
    /// `truth[k]` is the state at step k, including the initial state.
    pub truth: Vec<Vec<f64>>,
    /// `estimates[k-1][i]` is sensor i's posterior at step k.
    pub estimates: Vec<Vec<Vec<f64>>>,
    /// `mse[k-1][i]` = ‖x_k − posterior_k^i‖²/n.
    pub mse: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
    pub zs: Vec<Vec<f64>>,
    /// None while the detection window is warming up.
    pub verdicts: Vec<Vec<Option<Verdict>>>,
}

impl ReplicationTrace {
    pub fn any_h1(&self) -> bool {
        self.verdicts
            .iter()
            .flatten()
            .flatten()
            .any(Verdict::any_attack)
    }
}

/// Simulate one replication of `steps` steps against a prepared instance.
///
/// The estimator recursion runs in error coordinates e^i = x − x̂^i: running
/// predict/correct on the error state with the shared process noise added to
/// the priors and the virtual measurement −(τ + η) reproduces the estimate
/// recursion exactly, while keeping errors, residuals, and MSE at noise
/// scale. Simulating x̂ directly would lose them to cancellation once the
/// unstable plant outgrows the floating-point resolution at ‖x‖·ε.
pub fn run_replication(
    inst: &Instance,
    steps: usize,
    seed: u64,
    rep: usize,
) -> ReplicationTrace {
    let n = inst.sys.state_dim();
    let nf = n as f64;
    let sensors = inst.suite.sensor_count();
    let mut truth_sampler = GaussianSampler::new(seed, truth_stream(rep));
    let mut meas_sampler = GaussianSampler::new(seed, meas_stream(rep));
    let mut x = vec![0.0; n];
    truth_sampler.fill_standard_normal(&mut x);
    // posteriors start at zero, so the initial error is the initial state
    let mut st = EstimatorState::from_posteriors(vec![x.clone(); sensors]);
    let mut detectors: Vec<DetectorState> = (0..sensors)
        .map(|i| DetectorState::new(i, inst.t, inst.thresholds.clone()))
        .collect();
    let mut truth = vec![x.clone()];
    let mut estimates = Vec::with_capacity(steps);
    let mut mse = Vec::with_capacity(steps);
    let mut residuals = Vec::with_capacity(steps);
    let mut zs = Vec::with_capacity(steps);
    let mut verdicts = Vec::with_capacity(steps);
    for k in 1..=steps {
        let nu = inst.sys.sample_process_noise(&mut truth_sampler);
        let ax = inst.sys.a().matvec(&x);
        x = ax.iter().zip(&nu).map(|(a, v)| a + v).collect();
        let m = measurement_noise(&inst.suite, &inst.schedule, k, &mut meas_sampler);
        predict(&mut st, &inst.w, inst.sys.a());
        st.add_to_priors(&nu);
        let virtual_y: Vec<f64> = m.iter().map(|v| -v).collect();
        correct(&mut st, &inst.gains, &virtual_y, &inst.suite);
        // the error-state residual is the negated measurement residual
        let res = residual(&st, &virtual_y, &inst.suite);
        let mut step_z = Vec::with_capacity(sensors);
        let mut step_v = Vec::with_capacity(sensors);
        let mut step_r = Vec::with_capacity(sensors);
        for r in &res {
            let actual = -r.residual;
            let (z, _) =
                detectors[r.sensor].update_distance(actual, inst.bound.lambda[r.sensor], k);
            step_r.push(actual);
            step_z.push(z);
            step_v.push(detectors[r.sensor].decide());
        }
        estimates.push(
            st.posteriors()
                .iter()
                .map(|e| x.iter().zip(e).map(|(xv, ev)| xv - ev).collect())
                .collect(),
        );
        mse.push(
            st.posteriors()
                .iter()
                .map(|e| e.iter().map(|v| v * v).sum::<f64>() / nf)
                .collect(),
        );
        truth.push(x.clone());
        residuals.push(step_r);
        zs.push(step_z);
        verdicts.push(step_v);
    }
    ReplicationTrace {
        truth,
        estimates,
        mse,
        residuals,
        zs,
        verdicts,
    }
}

/// Paths to everything a run wrote.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub replication_dirs: Vec<PathBuf>,
    pub gain_path: PathBuf,
    pub thresholds_path: PathBuf,
    pub metadata_path: PathBuf,
    pub any_h1: bool,
}

/// Everything needed to re-run bit-identically plus the achieved quantities
/// the design produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata<'a> {
    pub config: &'a ScenarioConfig,
    pub achieved_rho: f64,
    pub achieved_margins: &'a [f64],
    pub bound: &'a VarianceBound,
    pub thresholds: &'a [Threshold],
    pub observable: Option<bool>,
    pub any_h1: bool,
    /// FARs are per-window marginal rates; consecutive windows overlap
    /// (slide by one), so consecutive v values are dependent.
    pub far_semantics: &'a str,
}

fn write_replication(
    dir: &Path,
    trace: &ReplicationTrace,
    fars: &[f64],
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    trace::write_scalar_trace(
        &dir.join("truth.csv"),
        "state",
        trace
            .truth
            .iter()
            .enumerate()
            .flat_map(|(k, x)| x.iter().enumerate().map(move |(s, &v)| (k, s, v))),
    )?;
    trace::write_vector_trace(
        &dir.join("estimates.csv"),
        trace.estimates.iter().enumerate().flat_map(|(k, posts)| {
            posts.iter().enumerate().flat_map(move |(i, p)| {
                p.iter().enumerate().map(move |(s, &v)| (k + 1, i, s, v))
            })
        }),
    )?;
    trace::write_scalar_trace(
        &dir.join("mse.csv"),
        "sensor",
        trace
            .mse
            .iter()
            .enumerate()
            .flat_map(|(k, row)| row.iter().enumerate().map(move |(i, &v)| (k + 1, i, v))),
    )?;
    trace::write_scalar_trace(
        &dir.join("residuals.csv"),
        "sensor",
        trace
            .residuals
            .iter()
            .enumerate()
            .flat_map(|(k, row)| row.iter().enumerate().map(move |(i, &v)| (k + 1, i, v))),
    )?;
    trace::write_verdict_trace(
        &dir.join("verdicts.csv"),
        fars,
        trace.verdicts.iter().enumerate().flat_map(|(k, row)| {
            row.iter()
                .enumerate()
                .filter_map(move |(i, v)| v.clone().map(|v| (trace.zs[k][i], v)))
        }),
    )?;
    Ok(())
}

/// Resolve the output directory: config, then environment, then ./runs.
pub fn resolve_out_dir(cfg: &ScenarioConfig) -> PathBuf {
    cfg.run
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("SENTINET_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// The full pipeline: structure checks, random instance, gain design,
/// variance levels, thresholds, simulation, persistence. Replications run on
/// worker threads; each writes only its own subdirectory.
pub fn run_algorithm1(cfg: &ScenarioConfig) -> Result<RunArtifacts, HarnessError> {
    let inst = prepare_instance(cfg)?;
    let out_dir = resolve_out_dir(cfg);
    std::fs::create_dir_all(&out_dir)?;
    let gain_path = out_dir.join("gain.json");
    save_gain(&gain_path, &inst.gains, cfg.gain.seed)?;
    let thresholds_path = out_dir.join("thresholds.json");
    std::fs::write(
        &thresholds_path,
        serde_json::to_string_pretty(&inst.thresholds)?,
    )?;

    let reps = cfg.run.replications;
    let mut replication_dirs = Vec::with_capacity(reps);
    for rep in 0..reps {
        replication_dirs.push(out_dir.join(format!("rep_{rep:03}")));
    }
    let mut results: Vec<Result<bool, HarnessError>> = Vec::with_capacity(reps);
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(reps);
        for (rep, dir) in replication_dirs.iter().enumerate() {
            let inst = &inst;
            handles.push(scope.spawn(move || -> Result<bool, HarnessError> {
                let trace = run_replication(inst, cfg.run.steps, cfg.run.seed, rep);
                write_replication(dir, &trace, &cfg.detector.fars)?;
                Ok(trace.any_h1())
            }));
        }
        for h in handles {
            results.push(h.join().expect("replication worker panicked"));
        }
    });
    let mut any_h1 = false;
    for r in results {
        any_h1 |= r?;
    }

    let metadata_path = out_dir.join("metadata.json");
    let meta = RunMetadata {
        config: cfg,
        achieved_rho: inst.gains.achieved_rho(),
        achieved_margins: inst.gains.achieved_margins(),
        bound: &inst.bound,
        thresholds: &inst.thresholds,
        observable: inst.observable,
        any_h1,
        far_semantics: "per-window marginal; windows slide by one step",
    };
    std::fs::write(&metadata_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(RunArtifacts {
        out_dir,
        replication_dirs,
        gain_path,
        thresholds_path,
        metadata_path,
        any_h1,
    })
}

/// One FAR's empirical H1 rate over non-overlapping windows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub far: f64,
    pub theta: f64,
    pub windows: usize,
    pub hits: usize,
    pub rate: f64,
    /// 3σ binomial interval around the empirical rate.
    pub lo: f64,
    pub hi: f64,
}

/// Empirical FAR on synthetic N(0,λ) residuals, one verdict per
/// non-overlapping window of length t.
pub fn cmd_far_calibrate(
    lambda: f64,
    t: usize,
    fars: &[f64],
    windows: usize,
    seed: u64,
) -> Result<Vec<CalibrationRow>, HarnessError> {
    if lambda <= 0.0 {
        return Err(HarnessError::Config(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if t < 1 {
        return Err(HarnessError::Config("t must be at least 1".into()));
    }
    if windows < 100 {
        return Err(HarnessError::Config(format!(
            "at least 100 windows are required, got {windows}"
        )));
    }
    if fars.is_empty() || fars.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(HarnessError::Config(
            "FARs must be a nonempty list in (0, 1)".into(),
        ));
    }
    let ths = threshold_table(fars, t);
    let mut sampler = GaussianSampler::new(seed, 0);
    let mut hits = vec![0usize; ths.len()];
    let sd = lambda.sqrt();
    for _ in 0..windows {
        let mut v = 0.0;
        for _ in 0..t {
            let r = sd * sampler.next_standard_normal();
            v += r * r / lambda;
        }
        for (c, th) in ths.iter().enumerate() {
            if v >= th.theta {
                hits[c] += 1;
            }
        }
    }
    Ok(ths
        .iter()
        .zip(&hits)
        .map(|(th, &h)| {
            let rate = h as f64 / windows as f64;
            let sigma = (rate * (1.0 - rate) / windows as f64).sqrt();
            CalibrationRow {
                far: th.far,
                theta: th.theta,
                windows,
                hits: h,
                rate,
                lo: (rate - 3.0 * sigma).max(0.0),
                hi: (rate + 3.0 * sigma).min(1.0),
            }
        })
        .collect())
}

/// Re-run detection on a persisted residual trace with the same engine the
/// online path uses. `lambda` holds one variance level per sensor, or a
/// single level applied to every sensor. Returns whether any H1 fired.
pub fn cmd_detect_offline(
    residual_file: &Path,
    lambda: &[f64],
    t: usize,
    fars: &[f64],
    out_file: &Path,
) -> Result<bool, HarnessError> {
    if lambda.is_empty() || lambda.iter().any(|&l| l <= 0.0) {
        return Err(HarnessError::Config(
            "lambda must be a nonempty list of positive levels".into(),
        ));
    }
    let records = trace::read_scalar_trace(residual_file)?;
    let ths = threshold_table(fars, t);
    let mut detectors: Vec<DetectorState> = Vec::new();
    let mut rows: Vec<(f64, Verdict)> = Vec::new();
    for rec in &records {
        while detectors.len() <= rec.id {
            detectors.push(DetectorState::new(detectors.len(), t, ths.clone()));
        }
        let l = if lambda.len() == 1 {
            lambda[0]
        } else {
            *lambda.get(rec.id).ok_or_else(|| {
                HarnessError::Config(format!("no lambda for sensor {}", rec.id))
            })?
        };
        let (z, _) = detectors[rec.id].update_distance(rec.value, l, rec.step);
        if let Some(v) = detectors[rec.id].decide() {
            rows.push((z, v));
        }
    }
    let any_h1 = rows.iter().any(|(_, v)| v.any_attack());
    trace::write_verdict_trace(out_file, fars, rows.into_iter())?;
    Ok(any_h1)
}

/// The simulation scenario: 10 states in three rings bridged into a chain
/// plus one downstream node, four sensors on a ring, two random attacks with
/// staggered onsets, and thresholds at 5% and 35% FAR.
pub fn paper_fig2_config() -> ScenarioConfig {
    ScenarioConfig {
        system: SystemBlock {
            graph: GraphSpec {
                nodes: 10,
                edges: vec![
                    (0, 1),
                    (1, 2),
                    (2, 0),
                    (2, 3),
                    (3, 4),
                    (4, 5),
                    (5, 3),
                    (5, 6),
                    (6, 7),
                    (7, 8),
                    (8, 6),
                    (8, 9),
                ],
            },
            target_rho: 1.1,
            q_scale: Some(0.06),
            q: None,
        },
        sensors: SensorsBlock {
            assignments: vec![0, 3, 6, 9],
            r: vec![0.06; 4],
            gn: GnSpec::Preset("cycle".into()),
            weight_rule: WeightRule::Random,
        },
        gain: GainBlock {
            c_floor: 0.2,
            budget: 20_000,
            seed: 41,
            gain_file: None,
        },
        detector: DetectorBlock {
            t: 12,
            fars: vec![0.05, 0.35],
        },
        run: RunBlock {
            steps: 200,
            seed: 4,
            replications: 1,
            out_dir: None,
        },
        attacks: vec![
            // sensor 1: zero-mean, variance 0.8, from step 40
            AttackSpec {
                sensor: 0,
                start: 40,
                end: None,
                mean: 0.0,
                std_dev: 0.8f64.sqrt(),
            },
            // sensor 3: mean 0.2, variance 0.3, from step 60
            AttackSpec {
                sensor: 2,
                start: 60,
                end: None,
                mean: 0.2,
                std_dev: 0.3f64.sqrt(),
            },
        ],
    }
}
