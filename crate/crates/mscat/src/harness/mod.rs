//! Experiment registry, Monte Carlo orchestration and reporting.
//!
//! Each experiment binds one asymptotic claim to a runnable metric; a config
//! names the experiment, the `(N, n)` ladder, the data model and the weight
//! function. Trials are independent: trial `t` of dimension index `d` derives
//! its seed as `derive_stream_seed(seed, d * trials + t)`, so reports are
//! byte-identical across thread counts and solver failures stay isolated to
//! their own rows (`metric_name = "error"`).

mod cli;
mod report;

pub use cli::cli_main;
pub use report::{
    aggregate_rows, emit_report, parse_report_json, render_csv, render_json, render_spectrum_csv,
    write_spectrum_csv, Aggregate, ExperimentReport, ReportFormat, Row,
};

use crate::datagen::{
    self, derive_stream_seed, CovarianceModel, DatagenError, EntryDistribution,
};
use crate::doa::{self, ArrayScenario, DoaError};
use crate::estimator::{self, EstimatorError, SampleSet};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::rmt::{self, RmtError};
use crate::weights::{WeightError, WeightFunction};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Per-trial failure, recorded as an error row instead of aborting the batch.
#[derive(Debug, Error)]
enum TrialError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Doa(#[from] DoaError),
    #[error(transparent)]
    Rmt(#[from] RmtError),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// The runnable experiments, each tied to one asymptotic claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Spectral-norm gap between the scaled robust estimate and the SCM.
    Theorem1Gap,
    /// Adds the maximal eigenvalue spacing to the gap metric.
    Spacing,
    /// Concentration of the SCM quadratic forms around one.
    Concentration,
    /// Deterministic-equivalent solver against its fixed point.
    EnValidation,
    /// Resolvent identities and the trace probe on random instances.
    LemmaChecks,
    /// SCM eigenvalues against the Marchenko-Pastur support edges.
    SupportDiagnostic,
    /// MUSIC vs G-MUSIC vs robust G-MUSIC angle errors.
    DoaCompare,
    /// Iteration counts of the fixed-point solver.
    ExistenceIterations,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Theorem1Gap => "theorem1_gap",
            ExperimentKind::Spacing => "spacing",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::EnValidation => "en_validation",
            ExperimentKind::LemmaChecks => "lemma_checks",
            ExperimentKind::SupportDiagnostic => "support_diagnostic",
            ExperimentKind::DoaCompare => "doa_compare",
            ExperimentKind::ExistenceIterations => "existence_iterations",
        }
    }
}

/// Array geometry for `doa_compare`, with the sensor count taken from the
/// dims ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub angles_deg: Vec<f64>,
    pub powers: Vec<f64>,
    pub sigma2: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            angles_deg: vec![-10.0, 15.0],
            powers: vec![1.0, 1.0],
            sigma2: 1.0,
        }
    }
}

impl ScenarioConfig {
    fn build(&self, n_sensors: usize) -> Result<ArrayScenario, DoaError> {
        ArrayScenario::new(
            n_sensors,
            self.angles_deg.iter().map(|a| a.to_radians()).collect(),
            self.powers.clone(),
            self.sigma2,
        )
    }
}

fn default_tol() -> f64 {
    estimator::DEFAULT_TOL
}

fn default_max_iter() -> usize {
    estimator::DEFAULT_MAX_ITER
}

fn default_grid_deg() -> f64 {
    0.1
}

fn default_model() -> CovarianceModel {
    CovarianceModel::Identity
}

fn default_dist() -> EntryDistribution {
    EntryDistribution::GaussianComplex
}

fn default_weight() -> WeightFunction {
    WeightFunction::StudentT { t: 1.0 }
}

fn default_z_values() -> Vec<f64> {
    vec![-0.5, -1.0, -2.0]
}

fn default_support_margin() -> f64 {
    0.15
}

/// One experiment run: which claim, which dimensions, which data.
///
/// JSON example:
/// ```json
/// {
///   "experiment": "theorem1_gap",
///   "dims": [[25, 50], [50, 100], [100, 200]],
///   "model": {"kind": "identity"},
///   "dist": {"kind": "gaussian_complex"},
///   "weight": {"family": "student_t", "t": 1.0},
///   "trials": 20,
///   "seed": 42
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// `(N, n)` pairs, each with `N < n`.
    pub dims: Vec<(usize, usize)>,
    #[serde(default = "default_model")]
    pub model: CovarianceModel,
    /// For `doa_compare` this is the noise distribution; sources are
    /// complex Gaussian.
    #[serde(default = "default_dist")]
    pub dist: EntryDistribution,
    #[serde(default = "default_weight")]
    pub weight: WeightFunction,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// DOA grid step in degrees.
    #[serde(default = "default_grid_deg")]
    pub grid_deg: f64,
    /// Evaluation points for `en_validation`.
    #[serde(default = "default_z_values")]
    pub z_values: Vec<f64>,
    /// Absolute slack around the support edges for `support_diagnostic`.
    #[serde(default = "default_support_margin")]
    pub support_margin: f64,
    /// Geometry for `doa_compare`; defaults to two unit-power sources at
    /// -10 and 15 degrees with unit noise variance.
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
}

impl ExperimentConfig {
    /// A minimal valid config, used by tests and `--help` documentation.
    pub fn example(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            dims: vec![(25, 50)],
            model: default_model(),
            dist: default_dist(),
            weight: default_weight(),
            trials: 2,
            seed: 42,
            tol: default_tol(),
            max_iter: default_max_iter(),
            grid_deg: default_grid_deg(),
            z_values: default_z_values(),
            support_margin: default_support_margin(),
            scenario: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.dims.is_empty() {
            return Err(HarnessError::Config("dims must be nonempty".into()));
        }
        for &(n_dim, n) in &self.dims {
            if n_dim == 0 || n_dim >= n {
                return Err(HarnessError::Config(format!(
                    "every dims entry needs 0 < N < n, got ({n_dim}, {n})"
                )));
            }
        }
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(HarnessError::Config("tol and max_iter must be positive".into()));
        }
        if !(self.grid_deg > 0.0 && self.grid_deg <= doa::MAX_GRID_STEP_DEG) {
            return Err(HarnessError::Config(format!(
                "grid_deg must be in (0, {}]",
                doa::MAX_GRID_STEP_DEG
            )));
        }
        self.weight
            .check_params()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.model
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.dist
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        match self.experiment {
            ExperimentKind::EnValidation => {
                if self.z_values.is_empty() || self.z_values.iter().any(|&z| !(z < 0.0)) {
                    return Err(HarnessError::Config(
                        "en_validation needs negative z_values".into(),
                    ));
                }
            }
            ExperimentKind::SupportDiagnostic => {
                if !matches!(
                    self.model,
                    CovarianceModel::Identity | CovarianceModel::ScaledIdentity { .. }
                ) {
                    return Err(HarnessError::Config(
                        "support_diagnostic needs an identity or scaled_identity model".into(),
                    ));
                }
            }
            ExperimentKind::DoaCompare => {
                let scenario = self.scenario.clone().unwrap_or_default();
                for &(n_dim, _) in &self.dims {
                    scenario
                        .build(n_dim)
                        .map_err(|e| HarnessError::Config(e.to_string()))?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Runs every `(dims, trial)` cell of the config on the current thread pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    run_experiment_with_threads(cfg, None)
}

/// Same as [`run_experiment`] with an explicit worker count. The report is
/// byte-identical for any thread count.
pub fn run_experiment_with_threads(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let tasks: Vec<(usize, usize)> = (0..cfg.dims.len())
        .flat_map(|d| (0..cfg.trials).map(move |t| (d, t)))
        .collect();

    let run_all = || -> Vec<Vec<Row>> {
        tasks
            .par_iter()
            .map(|&(dim_index, trial)| run_trial(cfg, dim_index, trial))
            .collect()
    };
    let nested = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| HarnessError::ThreadPool(e.to_string()))?
            .install(run_all),
        None => run_all(),
    };

    let rows: Vec<Row> = nested.into_iter().flatten().collect();
    let aggregates = aggregate_rows(&rows);
    Ok(ExperimentReport {
        rows,
        aggregates,
        config_echo: cfg.clone(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_trial(cfg: &ExperimentConfig, dim_index: usize, trial: usize) -> Vec<Row> {
    let (n_dim, n) = cfg.dims[dim_index];
    let seed = derive_stream_seed(cfg.seed, (dim_index * cfg.trials + trial) as u64);
    let row = |metric: &str, value: f64| Row {
        experiment: cfg.experiment.as_str().into(),
        n_dim,
        n_samples: n,
        trial,
        metric_name: metric.into(),
        value,
    };
    match run_trial_inner(cfg, n_dim, n, seed) {
        Ok(metrics) => metrics
            .into_iter()
            .map(|(metric, value)| row(&metric, value))
            .collect(),
        Err(_) => vec![row("error", 1.0)],
    }
}

fn run_trial_inner(
    cfg: &ExperimentConfig,
    n_dim: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<(String, f64)>, TrialError> {
    match cfg.experiment {
        ExperimentKind::Theorem1Gap => {
            let samples = make_samples(cfg, n_dim, n, seed)?;
            let report = solve_and_compare(cfg, &samples)?;
            Ok(vec![("norm_gap".into(), report.norm_gap)])
        }
        ExperimentKind::Spacing => {
            let samples = make_samples(cfg, n_dim, n, seed)?;
            let report = solve_and_compare(cfg, &samples)?;
            Ok(vec![
                ("norm_gap".into(), report.norm_gap),
                ("spacing_max".into(), report.spacing_max),
            ])
        }
        ExperimentKind::Concentration => {
            let samples = make_samples(cfg, n_dim, n, seed)?;
            let (max, _) = rmt::quadratic_concentration(&samples)?;
            Ok(vec![("concentration_max".into(), max)])
        }
        ExperimentKind::EnValidation => {
            let (_, c_matrix) = datagen::build_covariance(&cfg.model, n_dim, n_dim)?;
            let spectrum = linalg::hermitian_eigenvalues_sorted(&c_matrix);
            let c_ratio = n_dim as f64 / n as f64;
            let mut metrics = Vec::new();
            for &z in &cfg.z_values {
                let sol = rmt::solve_en(z, c_ratio, &spectrum, cfg.tol, cfg.max_iter)?;
                metrics.push((format!("e[z={z}]"), sol.e));
                metrics.push((format!("residual[z={z}]"), sol.residual));
            }
            Ok(metrics)
        }
        ExperimentKind::LemmaChecks => lemma_checks_trial(cfg, n_dim, seed),
        ExperimentKind::SupportDiagnostic => {
            let samples = make_samples(cfg, n_dim, n, seed)?;
            let spectrum =
                linalg::hermitian_eigenvalues_sorted(&estimator::sample_covariance(&samples));
            let scale = match cfg.model {
                CovarianceModel::ScaledIdentity { scale } => scale,
                _ => 1.0,
            };
            let (lo, hi) = rmt::mp_edges(samples.c_ratio(), scale)?;
            let lambda_min = spectrum[0];
            let lambda_max = spectrum[spectrum.len() - 1];
            let inside = lambda_min >= lo - cfg.support_margin
                && lambda_max <= hi + cfg.support_margin;
            Ok(vec![
                ("lambda_min".into(), lambda_min),
                ("lambda_max".into(), lambda_max),
                ("all_inside".into(), if inside { 1.0 } else { 0.0 }),
            ])
        }
        ExperimentKind::DoaCompare => doa_compare_trial(cfg, n_dim, n, seed),
        ExperimentKind::ExistenceIterations => {
            let samples = make_samples(cfg, n_dim, n, seed)?;
            let est = estimator::robust_fixed_point(&samples, &cfg.weight, cfg.tol, cfg.max_iter)?;
            Ok(vec![
                ("iterations".into(), est.iterations as f64),
                ("residual".into(), est.residual),
            ])
        }
    }
}

fn make_samples(
    cfg: &ExperimentConfig,
    n_dim: usize,
    n: usize,
    seed: u64,
) -> Result<SampleSet, TrialError> {
    Ok(datagen::generate_samples(
        &cfg.model, &cfg.dist, n_dim, n_dim, n, seed,
    )?)
}

fn solve_and_compare(
    cfg: &ExperimentConfig,
    samples: &SampleSet,
) -> Result<rmt::SpectrumReport, TrialError> {
    let est = estimator::robust_fixed_point(samples, &cfg.weight, cfg.tol, cfg.max_iter)?;
    Ok(rmt::spectrum_report(&est, samples)?)
}

fn lemma_checks_trial(
    cfg: &ExperimentConfig,
    n_dim: usize,
    seed: u64,
) -> Result<Vec<(String, f64)>, TrialError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = |rng: &mut ChaCha8Rng| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    };
    let m = CMatrix::from_fn(n_dim, n_dim, |_, _| gaussian(&mut rng));
    let hpd = &m * m.adjoint() + CMatrix::identity(n_dim, n_dim);
    let x = CVector::from_fn(n_dim, |_, _| gaussian(&mut rng));
    let t = rng.random_range(0.0..2.0);
    let mil_residual = rmt::mil_check(&hpd, &x, t)?;

    let m2 = CMatrix::from_fn(n_dim, n_dim, |_, _| gaussian(&mut rng));
    let a = &m2 * m2.adjoint();
    let b = {
        let m3 = CMatrix::from_fn(n_dim, n_dim, |_, _| gaussian(&mut rng));
        &m3 * m3.adjoint()
    };
    let v = CVector::from_fn(n_dim, |_, _| gaussian(&mut rng));
    let shift = rng.random_range(0.1..2.0);
    let (gap, bound) = rmt::rank_one_perturbation_gap(&b, &a, &v, shift)?;

    // One draw of the trace deviation with the normalized identity.
    let probe = rmt::trace_concentration_probe(
        &CMatrix::identity(n_dim, n_dim).map(|v| v / n_dim as f64),
        &cfg.dist,
        1,
        derive_stream_seed(seed, 1),
    );

    Ok(vec![
        ("mil_residual".into(), mil_residual),
        ("rank_one_gap".into(), gap),
        ("rank_one_bound".into(), bound),
        ("trace_dev".into(), probe.mean.re),
    ])
}

fn doa_compare_trial(
    cfg: &ExperimentConfig,
    n_dim: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<(String, f64)>, TrialError> {
    let scenario_cfg = cfg.scenario.clone().unwrap_or_default();
    let scn = scenario_cfg.build(n_dim)?;
    let k = scn.k();
    let (samples, _) = datagen::generate_snapshots(
        &scn,
        n,
        &EntryDistribution::GaussianComplex,
        &cfg.dist,
        seed,
    )?;
    let grid = doa::angle_grid(cfg.grid_deg);
    let shat = estimator::sample_covariance(&samples);

    let music = doa::empirical_music_spectrum(&shat, k, &grid)?;
    let gmusic = doa::gmusic_spectrum(&shat, n, k, &grid)?;
    let robust = doa::robust_gmusic_spectrum(&samples, &cfg.weight, k, &grid)?;

    let spectrum_gap = gmusic
        .values
        .iter()
        .zip(&robust.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let mut truth_deg: Vec<f64> = scn.angles.iter().map(|a| a.to_degrees()).collect();
    truth_deg.sort_by(f64::total_cmp);
    let mse = |ps: &doa::PseudoSpectrum| -> Result<f64, TrialError> {
        let angles = doa::estimate_angles(ps, k)?;
        Ok(angles
            .iter()
            .zip(&truth_deg)
            .map(|(est, truth)| (est.to_degrees() - truth).powi(2))
            .sum::<f64>()
            / k as f64)
    };

    Ok(vec![
        ("mse_music".into(), mse(&music)?),
        ("mse_gmusic".into(), mse(&gmusic)?),
        ("mse_robust".into(), mse(&robust)?),
        ("spectrum_gap".into(), spectrum_gap),
    ])
}
