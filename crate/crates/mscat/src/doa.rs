//! Direction-of-arrival estimation with a half-wavelength uniform linear
//! array: classical MUSIC on the population covariance, empirical MUSIC on an
//! estimate, the G-MUSIC eigenvector correction, and the robust variant that
//! plugs in the robust scatter estimate.
//!
//! Angles are radians everywhere in this module; the CLI and CSV layers
//! convert to degrees.

use crate::estimator::{self, EstimatorError, SampleSet};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::weights::WeightFunction;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coarsest admissible grid step for angle extraction (0.25 degrees).
pub const MAX_GRID_STEP_DEG: f64 = 0.25;

// Relative floor under which two eigenvalues count as a degenerate pair.
const DEGENERACY_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DoaError {
    #[error("scenario is invalid: {0}")]
    BadScenario(String),
    #[error("noise eigenspace has dimension {found}, expected {expected} (angle collision?)")]
    DegenerateScenario { found: usize, expected: usize },
    #[error("eigenvalues {i} and {k} are too close for the correction weights")]
    DegenerateSpectrum { i: usize, k: usize },
    #[error("input matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("need K = {k} < N = {n_dim} and n > N")]
    BadDimensions { k: usize, n_dim: usize },
    #[error("grid step {step_deg:.3} deg exceeds the {MAX_GRID_STEP_DEG} deg resolution bound")]
    GridTooCoarse { step_deg: f64 },
    #[error("found {found} local minima, need at least {needed}")]
    DetectionFailure { found: usize, needed: usize },
    #[error(transparent)]
    Solver(#[from] EstimatorError),
}

/// Source/array geometry for the snapshot model
/// `x = sum_k sqrt(p_k) s(theta_k) z_k + sigma w`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrayScenario {
    /// Number of sensors `N`.
    pub n_sensors: usize,
    /// Source angles in radians, `K < N`, pairwise distinct.
    pub angles: Vec<f64>,
    /// Source powers `p_k > 0`.
    pub powers: Vec<f64>,
    /// Noise variance `sigma^2 > 0`.
    pub sigma2: f64,
}

impl ArrayScenario {
    pub fn new(
        n_sensors: usize,
        angles: Vec<f64>,
        powers: Vec<f64>,
        sigma2: f64,
    ) -> Result<Self, DoaError> {
        let scn = ArrayScenario {
            n_sensors,
            angles,
            powers,
            sigma2,
        };
        scn.check()?;
        Ok(scn)
    }

    pub fn check(&self) -> Result<(), DoaError> {
        if self.angles.len() != self.powers.len() {
            return Err(DoaError::BadScenario(
                "angles and powers must have the same length".into(),
            ));
        }
        if self.angles.is_empty() || self.angles.len() >= self.n_sensors {
            return Err(DoaError::BadScenario(format!(
                "need 0 < K < N, got K = {}, N = {}",
                self.angles.len(),
                self.n_sensors
            )));
        }
        for (i, &a) in self.angles.iter().enumerate() {
            for &b in &self.angles[i + 1..] {
                if (a - b).abs() < 1e-12 {
                    return Err(DoaError::BadScenario("angles must be distinct".into()));
                }
            }
        }
        if self.powers.iter().any(|&p| !(p > 0.0)) || !(self.sigma2 > 0.0) {
            return Err(DoaError::BadScenario(
                "powers and sigma2 must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of sources `K`.
    pub fn k(&self) -> usize {
        self.angles.len()
    }

    /// Steering matrix `S = [s(theta_1), ..., s(theta_K)]`.
    pub fn steering_matrix(&self) -> CMatrix {
        let mut s = CMatrix::zeros(self.n_sensors, self.k());
        for (j, &theta) in self.angles.iter().enumerate() {
            s.set_column(j, &steering_vector(theta, self.n_sensors));
        }
        s
    }

    /// Population covariance `S P S^* + sigma^2 I`.
    pub fn population_covariance(&self) -> CMatrix {
        let s = self.steering_matrix();
        let mut p = CMatrix::zeros(self.k(), self.k());
        for (j, &pw) in self.powers.iter().enumerate() {
            p[(j, j)] = C64::new(pw, 0.0);
        }
        let mut c = &s * p * s.adjoint();
        for i in 0..self.n_sensors {
            c[(i, i)] += C64::new(self.sigma2, 0.0);
        }
        linalg::hermitize(&mut c);
        c
    }
}

/// Which estimator produced a pseudo-spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    TrueMusic,
    EmpiricalMusic,
    GMusic,
    RobustGMusic,
}

impl SpectrumKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpectrumKind::TrueMusic => "true_music",
            SpectrumKind::EmpiricalMusic => "empirical_music",
            SpectrumKind::GMusic => "gmusic",
            SpectrumKind::RobustGMusic => "robust_gmusic",
        }
    }
}

/// A localization metric sampled on an angle grid; sources sit at its minima.
#[derive(Debug, Clone)]
pub struct PseudoSpectrum {
    /// Sorted grid angles in radians.
    pub grid: Vec<f64>,
    /// Metric value at each grid angle.
    pub values: Vec<f64>,
    pub kind: SpectrumKind,
}

/// Unit-norm steering vector of a half-wavelength uniform linear array:
/// entry `m` is `exp(i pi m sin(theta)) / sqrt(N)`.
pub fn steering_vector(theta: f64, n: usize) -> CVector {
    let scale = 1.0 / (n as f64).sqrt();
    let phase = std::f64::consts::PI * theta.sin();
    CVector::from_fn(n, |m, _| {
        let arg = phase * m as f64;
        C64::new(arg.cos() * scale, arg.sin() * scale)
    })
}

/// Uniform angle grid over [-pi/2, pi/2] with the given step in degrees.
pub fn angle_grid(step_deg: f64) -> Vec<f64> {
    let step = step_deg.to_radians();
    let half = std::f64::consts::FRAC_PI_2;
    let count = ((2.0 * half) / step).round() as usize;
    (0..=count).map(|i| -half + i as f64 * step).collect()
}

fn projector_spectrum(
    basis: &CMatrix,
    grid: &[f64],
    kind: SpectrumKind,
) -> PseudoSpectrum {
    let n = basis.nrows();
    let values = grid
        .iter()
        .map(|&theta| {
            let s = steering_vector(theta, n);
            (basis.adjoint() * &s).norm_squared()
        })
        .collect();
    PseudoSpectrum {
        grid: grid.to_vec(),
        values,
        kind,
    }
}

/// The exact MUSIC metric `gamma(theta) = ||E_W^* s(theta)||^2` built from
/// the population covariance of the scenario, where `E_W` spans the noise
/// eigenspace at eigenvalue `sigma^2`. Zero at the true angles.
pub fn true_music_spectrum(
    scn: &ArrayScenario,
    grid: &[f64],
) -> Result<PseudoSpectrum, DoaError> {
    scn.check()?;
    let c = scn.population_covariance();
    let (values, vectors) = linalg::hermitian_eigen_sorted(&c);
    let expected = scn.n_sensors - scn.k();
    let tol = 1e-8 * scn.sigma2.max(1.0);
    let found = values.iter().filter(|&&v| (v - scn.sigma2).abs() <= tol).count();
    if found != expected {
        return Err(DoaError::DegenerateScenario { found, expected });
    }
    let noise_basis = vectors.columns(0, expected).into_owned();
    Ok(projector_spectrum(&noise_basis, grid, SpectrumKind::TrueMusic))
}

/// Classical baseline: the bottom `N - K` eigenvectors of an estimate stand
/// in for the noise subspace.
pub fn empirical_music_spectrum(
    m: &CMatrix,
    k: usize,
    grid: &[f64],
) -> Result<PseudoSpectrum, DoaError> {
    let n = m.nrows();
    if k >= n {
        return Err(DoaError::BadDimensions { k, n_dim: n });
    }
    let (_, vectors) = linalg::hermitian_eigen_sorted(m);
    let noise_basis = vectors.columns(0, n - k).into_owned();
    Ok(projector_spectrum(&noise_basis, grid, SpectrumKind::EmpiricalMusic))
}

/// The G-MUSIC correction: eigenvalues `mu_hat` of
/// `diag(lambda_hat) - (1/n) sqrt(lambda_hat) sqrt(lambda_hat)^T` and the
/// per-eigenvector weights `beta`.
///
/// `lambda_hat` must be sorted ascending and strictly positive; repeated
/// eigenvalues (zero denominators in `beta`) are reported as errors rather
/// than perturbed away.
pub fn gmusic_weights(
    lambda_hat: &[f64],
    n: usize,
    k: usize,
) -> Result<(Vec<f64>, Vec<f64>), DoaError> {
    let dim = lambda_hat.len();
    if k >= dim || n <= dim {
        return Err(DoaError::BadDimensions { k, n_dim: dim });
    }
    if lambda_hat.iter().any(|&l| !(l > 0.0))
        || lambda_hat.windows(2).any(|w| w[0] > w[1])
    {
        return Err(DoaError::NotPositiveDefinite);
    }
    // Ties inside the noise or signal block never enter the beta
    // denominators; only cross-block near-coincidences are degenerate, and
    // those are caught per term below.
    let scale = lambda_hat[dim - 1];

    let roots: Vec<f64> = lambda_hat.iter().map(|&l| l.sqrt()).collect();
    let mut perturbed = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            perturbed[(i, j)] = -roots[i] * roots[j] / n as f64;
        }
        perturbed[(i, i)] += lambda_hat[i];
    }
    let (mu_hat, _) = linalg::symmetric_eigen_sorted(&perturbed);

    let noise_dim = dim - k;
    let mut beta = vec![0.0; dim];
    for i in 0..dim {
        let correction: f64 = if i < noise_dim {
            (noise_dim..dim)
                .map(|kk| term(lambda_hat, &mu_hat, i, kk, scale))
                .sum::<Result<f64, DoaError>>()?
        } else {
            (0..noise_dim)
                .map(|kk| term(lambda_hat, &mu_hat, i, kk, scale))
                .sum::<Result<f64, DoaError>>()?
        };
        beta[i] = if i < noise_dim {
            1.0 + correction
        } else {
            -correction
        };
    }
    return Ok((beta, mu_hat));

    fn term(
        lambda: &[f64],
        mu: &[f64],
        i: usize,
        k: usize,
        scale: f64,
    ) -> Result<f64, DoaError> {
        let dl = lambda[i] - lambda[k];
        let dm = lambda[i] - mu[k];
        if dl.abs() <= DEGENERACY_FLOOR * scale || dm.abs() <= DEGENERACY_FLOOR * scale {
            return Err(DoaError::DegenerateSpectrum { i, k });
        }
        Ok(lambda[k] / dl - mu[k] / dm)
    }
}

/// The G-MUSIC estimate `gamma_hat(theta) = sum_i beta_i |s(theta)^* e_i|^2`
/// from any positive definite covariance estimate. Invariant under positive
/// scaling of the input matrix.
pub fn gmusic_spectrum(
    m: &CMatrix,
    n: usize,
    k: usize,
    grid: &[f64],
) -> Result<PseudoSpectrum, DoaError> {
    gmusic_spectrum_kind(m, n, k, grid, SpectrumKind::GMusic)
}

fn gmusic_spectrum_kind(
    m: &CMatrix,
    n: usize,
    k: usize,
    grid: &[f64],
    kind: SpectrumKind,
) -> Result<PseudoSpectrum, DoaError> {
    let (lambda_hat, vectors) = linalg::hermitian_eigen_sorted(m);
    let (beta, _) = gmusic_weights(&lambda_hat, n, k)?;
    let values = grid
        .iter()
        .map(|&theta| {
            let s = steering_vector(theta, m.nrows());
            let proj = vectors.adjoint() * &s;
            proj.iter()
                .zip(&beta)
                .map(|(p, &b)| b * p.norm_sqr())
                .sum()
        })
        .collect();
    Ok(PseudoSpectrum {
        grid: grid.to_vec(),
        values,
        kind,
    })
}

/// G-MUSIC on the robust scatter estimate. No rescaling is needed: the
/// spectrum is invariant under the positive scale separating the robust
/// estimate from the SCM.
pub fn robust_gmusic_spectrum(
    s: &SampleSet,
    w: &WeightFunction,
    k: usize,
    grid: &[f64],
) -> Result<PseudoSpectrum, DoaError> {
    let est = estimator::robust_fixed_point(
        s,
        w,
        estimator::DEFAULT_TOL,
        estimator::DEFAULT_MAX_ITER,
    )?;
    gmusic_spectrum_kind(&est.matrix, s.n_samples(), k, grid, SpectrumKind::RobustGMusic)
}

/// Extracts the `k` deepest local minima of a pseudo-spectrum, each refined
/// by parabolic interpolation through the three bracketing grid points.
/// Returns angles sorted ascending.
pub fn estimate_angles(ps: &PseudoSpectrum, k: usize) -> Result<Vec<f64>, DoaError> {
    let grid = &ps.grid;
    let values = &ps.values;
    let max_step = grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    if max_step > MAX_GRID_STEP_DEG.to_radians() * (1.0 + 1e-9) {
        return Err(DoaError::GridTooCoarse {
            step_deg: max_step.to_degrees(),
        });
    }

    let mut minima: Vec<(f64, f64)> = Vec::new();
    for i in 1..grid.len().saturating_sub(1) {
        if values[i] < values[i - 1] && values[i] < values[i + 1] {
            let (lo, mid, hi) = (values[i - 1], values[i], values[i + 1]);
            let denom = lo - 2.0 * mid + hi;
            let (theta, value) = if denom.abs() > 1e-300 {
                let offset = 0.5 * (lo - hi) / denom;
                let h = 0.5 * (grid[i + 1] - grid[i - 1]);
                (
                    grid[i] + offset * h,
                    mid - 0.125 * (lo - hi).powi(2) / denom,
                )
            } else {
                (grid[i], mid)
            };
            minima.push((theta, value));
        }
    }
    if minima.len() < k {
        return Err(DoaError::DetectionFailure {
            found: minima.len(),
            needed: k,
        });
    }
    minima.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut angles: Vec<f64> = minima[..k].iter().map(|&(theta, _)| theta).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}
