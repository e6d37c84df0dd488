//! Seeded generators for sample matrices, population covariance models and
//! array snapshots.
//!
//! Entries have zero mean and unit variance by construction, and every
//! distribution keeps a finite moment of order strictly above 8 so the
//! large-dimensional results apply. Determinism contract: identical
//! `(config, seed)` produce bit-identical output; parallel trials derive
//! their seeds with [`derive_stream_seed`].

use crate::doa::ArrayScenario;
use crate::estimator::{EstimatorError, Provenance, SampleSet};
use crate::linalg::{self, CMatrix, C64};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

/// Heavy tails below this many degrees of freedom lose the moment of order
/// 8 + eta required of the entries.
pub const STUDENT_T_DOF_FLOOR: f64 = 9.0;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("student_t needs dof >= {STUDENT_T_DOF_FLOOR} for the 8+eta moment condition, got {0}")]
    MomentCondition(f64),
    #[error("covariance model parameter out of range: {0}")]
    BadModel(String),
    #[error("generator dimension M = {m} must be at least N = {n_dim}")]
    BadDimensions { m: usize, n_dim: usize },
    #[error("cannot parse descriptor '{0}'")]
    BadDescriptor(String),
    #[error("malformed sample file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Samples(#[from] EstimatorError),
    #[error(transparent)]
    Scenario(#[from] crate::doa::DoaError),
}

/// Distribution of the independent entries `y_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EntryDistribution {
    GaussianComplex,
    GaussianReal,
    Qpsk,
    StudentTNormalized { dof: f64 },
}

impl EntryDistribution {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if let EntryDistribution::StudentTNormalized { dof } = *self {
            if !(dof >= STUDENT_T_DOF_FLOOR) {
                return Err(DatagenError::MomentCondition(dof));
            }
        }
        Ok(())
    }

    pub fn is_complex(&self) -> bool {
        matches!(
            self,
            EntryDistribution::GaussianComplex | EntryDistribution::Qpsk
        )
    }

    /// Unit by construction for every kind.
    pub fn variance(&self) -> f64 {
        1.0
    }

    /// Exact fourth absolute moment `E|y|^4`.
    pub fn fourth_moment(&self) -> f64 {
        match *self {
            EntryDistribution::GaussianComplex => 2.0,
            EntryDistribution::GaussianReal => 3.0,
            EntryDistribution::Qpsk => 1.0,
            EntryDistribution::StudentTNormalized { dof } => 3.0 * (dof - 2.0) / (dof - 4.0),
        }
    }

    pub(crate) fn draw(&self, rng: &mut ChaCha8Rng) -> C64 {
        match *self {
            EntryDistribution::GaussianComplex => {
                let root_half = 0.5f64.sqrt();
                C64::new(
                    rng.sample::<f64, _>(StandardNormal) * root_half,
                    rng.sample::<f64, _>(StandardNormal) * root_half,
                )
            }
            EntryDistribution::GaussianReal => {
                C64::new(rng.sample::<f64, _>(StandardNormal), 0.0)
            }
            EntryDistribution::Qpsk => {
                let root_half = 0.5f64.sqrt();
                let sym = rng.random_range(0..4u8);
                let re = if sym & 1 == 0 { root_half } else { -root_half };
                let im = if sym & 2 == 0 { root_half } else { -root_half };
                C64::new(re, im)
            }
            EntryDistribution::StudentTNormalized { dof } => {
                let t = StudentT::new(dof).expect("validated dof");
                let scale = ((dof - 2.0) / dof).sqrt();
                C64::new(rng.sample::<f64, _>(t) * scale, 0.0)
            }
        }
    }
}

impl fmt::Display for EntryDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            EntryDistribution::GaussianComplex => write!(f, "gaussian_complex"),
            EntryDistribution::GaussianReal => write!(f, "gaussian_real"),
            EntryDistribution::Qpsk => write!(f, "qpsk"),
            EntryDistribution::StudentTNormalized { dof } => write!(f, "student_t:{dof}"),
        }
    }
}

impl std::str::FromStr for EntryDistribution {
    type Err = DatagenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let dist = match s {
            "gaussian_complex" => EntryDistribution::GaussianComplex,
            "gaussian_real" => EntryDistribution::GaussianReal,
            "qpsk" => EntryDistribution::Qpsk,
            other => match other.strip_prefix("student_t:") {
                Some(dof) => EntryDistribution::StudentTNormalized {
                    dof: dof
                        .parse()
                        .map_err(|_| DatagenError::BadDescriptor(s.into()))?,
                },
                None => return Err(DatagenError::BadDescriptor(s.into())),
            },
        };
        dist.validate()?;
        Ok(dist)
    }
}

/// Population covariance factory with declared eigenvalue bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceModel {
    Identity,
    ScaledIdentity { scale: f64 },
    Toeplitz { rho: f64 },
    Spiked { spikes: Vec<f64> },
}

impl CovarianceModel {
    pub fn validate(&self) -> Result<(), DatagenError> {
        match self {
            CovarianceModel::Identity => Ok(()),
            CovarianceModel::ScaledIdentity { scale } => {
                if *scale > 0.0 && scale.is_finite() {
                    Ok(())
                } else {
                    Err(DatagenError::BadModel(format!("scale = {scale}")))
                }
            }
            CovarianceModel::Toeplitz { rho } => {
                if (0.0..1.0).contains(rho) {
                    Ok(())
                } else {
                    Err(DatagenError::BadModel(format!("rho = {rho} not in [0,1)")))
                }
            }
            CovarianceModel::Spiked { spikes } => {
                if !spikes.is_empty() && spikes.iter().all(|s| *s > 0.0 && s.is_finite()) {
                    Ok(())
                } else {
                    Err(DatagenError::BadModel("spikes must be positive".into()))
                }
            }
        }
    }

    /// Declared eigenvalue range `[C_minus, C_plus]` of every generated
    /// covariance, independent of the dimension.
    pub fn declared_bounds(&self) -> (f64, f64) {
        match self {
            CovarianceModel::Identity => (1.0, 1.0),
            CovarianceModel::ScaledIdentity { scale } => (*scale, *scale),
            CovarianceModel::Toeplitz { rho } => ((1.0 - rho) / (1.0 + rho), (1.0 + rho) / (1.0 - rho)),
            CovarianceModel::Spiked { spikes } => {
                let lo = spikes.iter().copied().fold(1.0, f64::min);
                let hi = spikes.iter().copied().fold(1.0, f64::max);
                (lo, hi)
            }
        }
    }

    fn covariance(&self, n_dim: usize) -> Result<DMatrix<f64>, DatagenError> {
        self.validate()?;
        Ok(match self {
            CovarianceModel::Identity => DMatrix::identity(n_dim, n_dim),
            CovarianceModel::ScaledIdentity { scale } => {
                DMatrix::identity(n_dim, n_dim) * *scale
            }
            CovarianceModel::Toeplitz { rho } => DMatrix::from_fn(n_dim, n_dim, |i, j| {
                rho.powi((i as i64 - j as i64).unsigned_abs() as i32)
            }),
            CovarianceModel::Spiked { spikes } => {
                if spikes.len() > n_dim {
                    return Err(DatagenError::BadModel(format!(
                        "{} spikes in dimension {n_dim}",
                        spikes.len()
                    )));
                }
                let mut c = DMatrix::identity(n_dim, n_dim);
                for (i, &s) in spikes.iter().enumerate() {
                    c[(i, i)] = s;
                }
                c
            }
        })
    }
}

impl fmt::Display for CovarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceModel::Identity => write!(f, "identity"),
            CovarianceModel::ScaledIdentity { scale } => write!(f, "scaled_identity:{scale}"),
            CovarianceModel::Toeplitz { rho } => write!(f, "toeplitz:{rho}"),
            CovarianceModel::Spiked { spikes } => {
                let list: Vec<String> = spikes.iter().map(f64::to_string).collect();
                write!(f, "spiked:{}", list.join(","))
            }
        }
    }
}

impl std::str::FromStr for CovarianceModel {
    type Err = DatagenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let model = if s == "identity" {
            CovarianceModel::Identity
        } else if let Some(v) = s.strip_prefix("scaled_identity:") {
            CovarianceModel::ScaledIdentity {
                scale: v
                    .parse()
                    .map_err(|_| DatagenError::BadDescriptor(s.into()))?,
            }
        } else if let Some(v) = s.strip_prefix("toeplitz:") {
            CovarianceModel::Toeplitz {
                rho: v
                    .parse()
                    .map_err(|_| DatagenError::BadDescriptor(s.into()))?,
            }
        } else if let Some(v) = s.strip_prefix("spiked:") {
            let spikes: Result<Vec<f64>, _> = v.split(',').map(str::parse).collect();
            CovarianceModel::Spiked {
                spikes: spikes.map_err(|_| DatagenError::BadDescriptor(s.into()))?,
            }
        } else {
            return Err(DatagenError::BadDescriptor(s.into()));
        };
        model.validate()?;
        Ok(model)
    }
}

/// Counter-based split of a master seed into independent per-trial seeds
/// (SplitMix64 finalizer over `master + counter * golden_ratio`).
pub fn derive_stream_seed(master: u64, counter: u64) -> u64 {
    let mut z = master.wrapping_add(counter.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// An `M x n` matrix of i.i.d. entries, column by column (sample by sample).
pub fn generate_y(
    dist: &EntryDistribution,
    m_dim: usize,
    n: usize,
    seed: u64,
) -> Result<CMatrix, DatagenError> {
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = CMatrix::zeros(m_dim, n);
    for j in 0..n {
        for i in 0..m_dim {
            y[(i, j)] = dist.draw(&mut rng);
        }
    }
    Ok(y)
}

/// The factor `A` (as `[C^{1/2}, 0]` when `M > N`) and the covariance `C`
/// of a model in dimension `N`.
pub fn build_covariance(
    model: &CovarianceModel,
    n_dim: usize,
    m_dim: usize,
) -> Result<(CMatrix, CMatrix), DatagenError> {
    if m_dim < n_dim {
        return Err(DatagenError::BadDimensions { m: m_dim, n_dim });
    }
    let c_real = model.covariance(n_dim)?;
    let c = c_real.map(|v| C64::new(v, 0.0));
    let root = linalg::hermitian_sqrt(&c);
    let mut a = CMatrix::zeros(n_dim, m_dim);
    a.view_mut((0, 0), (n_dim, n_dim)).copy_from(&root);
    Ok((a, c))
}

/// Samples `X = A Y` with provenance recorded.
pub fn generate_samples(
    model: &CovarianceModel,
    dist: &EntryDistribution,
    n_dim: usize,
    m_dim: usize,
    n: usize,
    seed: u64,
) -> Result<SampleSet, DatagenError> {
    let (a, _) = build_covariance(model, n_dim, m_dim)?;
    let y = generate_y(dist, m_dim, n, seed)?;
    let x = &a * y;
    let provenance = Provenance {
        kind: format!("{model}/{dist}"),
        seed,
    };
    Ok(SampleSet::new(x, m_dim, dist.is_complex(), Some(provenance))?)
}

/// Array snapshots `x_i = sum_k sqrt(p_k) s(theta_k) z_{k,i} + sigma w_i`,
/// together with the factor `A = [S P^{1/2}, sigma I]`. Per column, the `K`
/// source entries are drawn before the `N` noise entries.
pub fn generate_snapshots(
    scn: &ArrayScenario,
    n: usize,
    source_dist: &EntryDistribution,
    noise_dist: &EntryDistribution,
    seed: u64,
) -> Result<(SampleSet, CMatrix), DatagenError> {
    scn.check()?;
    source_dist.validate()?;
    noise_dist.validate()?;
    let n_dim = scn.n_sensors;
    let k = scn.k();
    let m_dim = n_dim + k;

    let steering = scn.steering_matrix();
    let mut a = CMatrix::zeros(n_dim, m_dim);
    for (j, &p) in scn.powers.iter().enumerate() {
        let col = steering.column(j) * C64::new(p.sqrt(), 0.0);
        a.set_column(j, &col);
    }
    let sigma = scn.sigma2.sqrt();
    for i in 0..n_dim {
        a[(i, k + i)] = C64::new(sigma, 0.0);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = CMatrix::zeros(m_dim, n);
    for j in 0..n {
        for i in 0..k {
            y[(i, j)] = source_dist.draw(&mut rng);
        }
        for i in 0..n_dim {
            y[(k + i, j)] = noise_dist.draw(&mut rng);
        }
    }

    let x = &a * y;
    let provenance = Provenance {
        kind: format!("snapshots(k={k},src={source_dist},noise={noise_dist})"),
        seed,
    };
    let samples = SampleSet::new(x, m_dim, true, Some(provenance))?;
    Ok((samples, a))
}

/// Writes a sample set as CSV: a name header, a metadata row
/// `N,n,M,kind,seed`, then one row per sample with its `N` entries
/// (interleaved `re,im` pairs when complex).
pub fn write_sample_csv<P: AsRef<Path>>(path: P, s: &SampleSet) -> Result<(), DatagenError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let (kind, seed) = match s.provenance() {
        Some(p) => (p.kind.clone(), p.seed),
        None => ("unknown".into(), 0),
    };
    writeln!(out, "N,n,M,kind,seed")?;
    writeln!(
        out,
        "{},{},{},{},{}",
        s.n_dim(),
        s.n_samples(),
        s.m_dim(),
        kind,
        seed
    )?;
    let x = s.matrix();
    for j in 0..s.n_samples() {
        let mut fields = Vec::with_capacity(2 * s.n_dim());
        for i in 0..s.n_dim() {
            let v = x[(i, j)];
            fields.push(format!("{}", v.re));
            if s.is_complex() {
                fields.push(format!("{}", v.im));
            }
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Reads a sample set written by [`write_sample_csv`]. Rows with `2N` values
/// are interpreted as interleaved `re,im` pairs, rows with `N` values as
/// real samples.
pub fn read_sample_csv<P: AsRef<Path>>(path: P) -> Result<SampleSet, DatagenError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = file.lines();
    let header = lines
        .next()
        .ok_or_else(|| DatagenError::BadFile("empty file".into()))??;
    if header.trim() != "N,n,M,kind,seed" {
        return Err(DatagenError::BadFile(format!("bad header '{header}'")));
    }
    let meta = lines
        .next()
        .ok_or_else(|| DatagenError::BadFile("missing metadata row".into()))??;
    let fields: Vec<&str> = meta.trim().split(',').collect();
    if fields.len() != 5 {
        return Err(DatagenError::BadFile(format!("bad metadata row '{meta}'")));
    }
    let n_dim: usize = fields[0]
        .parse()
        .map_err(|_| DatagenError::BadFile("bad N".into()))?;
    let n: usize = fields[1]
        .parse()
        .map_err(|_| DatagenError::BadFile("bad n".into()))?;
    let m_dim: usize = fields[2]
        .parse()
        .map_err(|_| DatagenError::BadFile("bad M".into()))?;
    let kind = fields[3].to_string();
    let seed: u64 = fields[4]
        .parse()
        .map_err(|_| DatagenError::BadFile("bad seed".into()))?;

    let mut x = CMatrix::zeros(n_dim, n);
    let mut is_complex = None;
    for (j, line) in lines.enumerate() {
        let line = line?;
        if j >= n {
            return Err(DatagenError::BadFile("too many sample rows".into()));
        }
        let values: Result<Vec<f64>, _> = line.trim().split(',').map(str::parse).collect();
        let values = values.map_err(|_| DatagenError::BadFile(format!("bad row {j}")))?;
        let complex = match values.len() {
            l if l == 2 * n_dim => true,
            l if l == n_dim => false,
            l => {
                return Err(DatagenError::BadFile(format!(
                    "row {j} has {l} values, expected {n_dim} or {}",
                    2 * n_dim
                )))
            }
        };
        if *is_complex.get_or_insert(complex) != complex {
            return Err(DatagenError::BadFile("mixed real and complex rows".into()));
        }
        for i in 0..n_dim {
            x[(i, j)] = if complex {
                C64::new(values[2 * i], values[2 * i + 1])
            } else {
                C64::new(values[i], 0.0)
            };
        }
    }
    let is_complex = is_complex.unwrap_or(false);
    Ok(SampleSet::new(
        x,
        m_dim,
        is_complex,
        Some(Provenance { kind, seed }),
    )?)
}
