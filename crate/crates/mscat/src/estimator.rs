//! Sample covariance matrix and the robust scatter fixed point.
//!
//! The robust estimate is the unique Hermitian positive definite solution of
//!
//! ```text
//! Z = (1/n) sum_i u( (1/N) x_i^* Z^{-1} x_i ) x_i x_i^*
//! ```
//!
//! computed by iterating from `Z = I`. The quadratic forms
//! `d_i = (1/N) x_i^* Z^{-1} x_i` fully determine each iterate, so the solver
//! stops on their maximal relative change. The scalar interference iteration
//! over `q = (d_1, ..., d_n)` characterizes the same solution through the
//! maps `h_j(q) = (1/N) x_j^* ((1/n) sum_i u(q_i) x_i x_i^*)^{-1} x_j` and is
//! exposed separately because its trajectory is monotone from a feasible
//! start.

use crate::linalg::{self, hermitize, CMatrix, C64};
use crate::weights::WeightFunction;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default relative tolerance on the quadratic forms.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default iteration cap; desk-scale problems converge in tens of steps.
pub const DEFAULT_MAX_ITER: usize = 500;

// Rank check: smallest eigenvalue of the SCM relative to the largest.
const SPAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("sample matrix must be nonempty and finite")]
    InvalidSamples,
    #[error("generator dimension M = {m} must be at least N = {n_dim}")]
    BadGeneratorDimension { m: usize, n_dim: usize },
    #[error("solver requires N < n, got N = {n_dim}, n = {n_samples}")]
    NotEnoughSamples { n_dim: usize, n_samples: usize },
    #[error("columns do not span the full space: lambda_min/lambda_max = {ratio:.3e}")]
    SpanDeficient { ratio: f64 },
    #[error("matrix is singular or not positive definite")]
    Singular,
    #[error("no convergence after {iterations} iterations, last residual {residual:.3e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("starting point must have {expected} strictly positive entries")]
    InvalidStart { expected: usize },
    #[error("estimate has not converged")]
    NotConvergedEstimate,
}

/// Where a sample matrix came from: generator descriptor plus seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: String,
    pub seed: u64,
}

/// A data matrix `X` of `n` column samples in dimension `N`, with the
/// generator dimension `M >= N` recorded for the `x = A y` model.
#[derive(Debug, Clone)]
pub struct SampleSet {
    x: CMatrix,
    m_dim: usize,
    is_complex: bool,
    provenance: Option<Provenance>,
}

impl SampleSet {
    /// Wraps a complex sample matrix. Fails on empty or non-finite data and
    /// when `m_dim < N`.
    pub fn new(
        x: CMatrix,
        m_dim: usize,
        is_complex: bool,
        provenance: Option<Provenance>,
    ) -> Result<Self, EstimatorError> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(EstimatorError::InvalidSamples);
        }
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(EstimatorError::InvalidSamples);
        }
        if m_dim < x.nrows() {
            return Err(EstimatorError::BadGeneratorDimension {
                m: m_dim,
                n_dim: x.nrows(),
            });
        }
        Ok(SampleSet {
            x,
            m_dim,
            is_complex,
            provenance,
        })
    }

    /// Wraps a real sample matrix (imaginary parts zero).
    pub fn from_real(
        x: nalgebra::DMatrix<f64>,
        m_dim: usize,
        provenance: Option<Provenance>,
    ) -> Result<Self, EstimatorError> {
        let complex = x.map(|v| C64::new(v, 0.0));
        SampleSet::new(complex, m_dim, false, provenance)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.x
    }

    /// Dimension `N` of each sample.
    pub fn n_dim(&self) -> usize {
        self.x.nrows()
    }

    /// Number of samples `n`.
    pub fn n_samples(&self) -> usize {
        self.x.ncols()
    }

    /// Generator dimension `M`.
    pub fn m_dim(&self) -> usize {
        self.m_dim
    }

    /// Aspect ratio `c = N / n`.
    pub fn c_ratio(&self) -> f64 {
        self.n_dim() as f64 / self.n_samples() as f64
    }

    pub fn is_complex(&self) -> bool {
        self.is_complex
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }
}

/// A converged robust scatter estimate with its solver trace.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    /// Hermitian positive definite solution of the fixed-point equation.
    pub matrix: CMatrix,
    /// Converged quadratic forms `d_i = (1/N) x_i^* C^{-1} x_i`.
    pub d: Vec<f64>,
    /// Number of iterations performed.
    pub iterations: usize,
    /// Spectral norm of `C - (1/n) sum_i u(d_i) x_i x_i^*`.
    pub residual: f64,
    /// `phi_inverse(1)` of the weight function used.
    pub scale_reference: f64,
}

impl CovarianceEstimate {
    /// `phi_inverse(1) * C`, the object asymptotically equal to the SCM.
    pub fn scaled(&self) -> CMatrix {
        self.matrix.map(|v| v * self.scale_reference)
    }
}

/// The sample covariance matrix `(1/n) X X^*`.
pub fn sample_covariance(s: &SampleSet) -> CMatrix {
    let n = s.n_samples() as f64;
    let mut out = s.matrix() * s.matrix().adjoint();
    out /= C64::new(n, 0.0);
    hermitize(&mut out);
    out
}

/// The quadratic forms `d_i = (1/N) x_i^* Z^{-1} x_i` for all samples,
/// through a single Cholesky factorization of `Z`.
pub fn quadratic_forms(s: &SampleSet, z: &CMatrix) -> Result<Vec<f64>, EstimatorError> {
    quadratic_forms_impl(s.matrix(), z)
}

fn quadratic_forms_impl(x: &CMatrix, z: &CMatrix) -> Result<Vec<f64>, EstimatorError> {
    let n_dim = x.nrows() as f64;
    let chol = z.clone().cholesky().ok_or(EstimatorError::Singular)?;
    // x^* Z^{-1} x = ||L^{-1} x||^2 with Z = L L^*.
    let mut w = x.clone();
    chol.l().solve_lower_triangular_unchecked_mut(&mut w);
    Ok((0..x.ncols())
        .map(|j| (w.column(j).norm_squared() / n_dim).max(0.0))
        .collect())
}

/// `(1/n) sum_i u(q_i) x_i x_i^*` as a weighted Gram matrix.
fn weighted_gram(x: &CMatrix, q: &[f64], w: &WeightFunction) -> CMatrix {
    let n = x.ncols();
    let mut scaled = x.clone();
    for (j, &qj) in q.iter().enumerate() {
        let factor = (w.u_at(qj.max(0.0)) / n as f64).sqrt();
        scaled.column_mut(j).scale_mut(factor);
    }
    let mut gram = &scaled * scaled.adjoint();
    hermitize(&mut gram);
    gram
}

fn check_solver_entry(s: &SampleSet) -> Result<(), EstimatorError> {
    if s.n_dim() >= s.n_samples() {
        return Err(EstimatorError::NotEnoughSamples {
            n_dim: s.n_dim(),
            n_samples: s.n_samples(),
        });
    }
    let spectrum = linalg::hermitian_eigenvalues_sorted(&sample_covariance(s));
    let (min, max) = (spectrum[0], spectrum[spectrum.len() - 1]);
    if !(min > SPAN_FLOOR * max) {
        return Err(EstimatorError::SpanDeficient { ratio: min / max });
    }
    Ok(())
}

fn max_relative_change(next: &[f64], prev: &[f64]) -> f64 {
    next.iter()
        .zip(prev)
        .map(|(&a, &b)| (a - b).abs() / b.max(1.0))
        .fold(0.0, f64::max)
}

/// Solves the robust fixed-point equation by iterating from `Z = I`.
pub fn robust_fixed_point(
    s: &SampleSet,
    w: &WeightFunction,
    tol: f64,
    max_iter: usize,
) -> Result<CovarianceEstimate, EstimatorError> {
    let identity = CMatrix::identity(s.n_dim(), s.n_dim());
    robust_fixed_point_from(s, w, identity, tol, max_iter)
}

/// Same as [`robust_fixed_point`] but starting from a caller-supplied
/// Hermitian positive definite `z0` (the limit does not depend on it).
pub fn robust_fixed_point_from(
    s: &SampleSet,
    w: &WeightFunction,
    z0: CMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<CovarianceEstimate, EstimatorError> {
    check_solver_entry(s)?;
    let x = s.matrix();
    let mut d = quadratic_forms_impl(x, &z0)?;
    let mut last_change = f64::INFINITY;
    for iteration in 1..=max_iter {
        let z = weighted_gram(x, &d, w);
        let d_next = quadratic_forms_impl(x, &z)?;
        last_change = max_relative_change(&d_next, &d);
        d = d_next;
        if last_change <= tol {
            let rebuilt = weighted_gram(x, &d, w);
            let residual = linalg::hermitian_spectral_norm(&(&z - rebuilt));
            return Ok(CovarianceEstimate {
                matrix: z,
                d,
                iterations: iteration,
                residual,
                scale_reference: w.scale_reference(),
            });
        }
    }
    Err(EstimatorError::NotConverged {
        iterations: max_iter,
        residual: last_change,
    })
}

/// Trajectory and limit of the scalar interference iteration.
#[derive(Debug, Clone)]
pub struct InterferenceSolution {
    /// Fixed point `q*` of the maps `h_j`.
    pub q: Vec<f64>,
    /// Number of iterations performed.
    pub iterations: usize,
    /// `max_j q_j` after each step, starting with the initial point.
    pub sup_trace: Vec<f64>,
}

/// Iterates `q_j <- h_j(q)` from a strictly positive start until the maximal
/// relative change drops below `tol`. From a feasible start
/// (`h_j(q0) <= q0_j` for all `j`) the trajectory is entrywise nonincreasing.
pub fn interference_iterate(
    s: &SampleSet,
    w: &WeightFunction,
    q0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<InterferenceSolution, EstimatorError> {
    check_solver_entry(s)?;
    if q0.len() != s.n_samples() || q0.iter().any(|&q| !(q > 0.0) || !q.is_finite()) {
        return Err(EstimatorError::InvalidStart {
            expected: s.n_samples(),
        });
    }
    let x = s.matrix();
    let mut q = q0.to_vec();
    let mut sup_trace = vec![q.iter().copied().fold(f64::MIN, f64::max)];
    let mut last_change = f64::INFINITY;
    for iteration in 1..=max_iter {
        let z = weighted_gram(x, &q, w);
        let q_next = quadratic_forms_impl(x, &z)?;
        last_change = max_relative_change(&q_next, &q);
        q = q_next;
        sup_trace.push(q.iter().copied().fold(f64::MIN, f64::max));
        if last_change <= tol {
            return Ok(InterferenceSolution {
                q,
                iterations: iteration,
                sup_trace,
            });
        }
    }
    Err(EstimatorError::NotConverged {
        iterations: max_iter,
        residual: last_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CVector;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_real(n_dim: usize, n: usize, seed: u64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = nalgebra::DMatrix::<f64>::from_fn(n_dim, n, |_, _| rng.sample(StandardNormal));
        SampleSet::from_real(x, n_dim, None).unwrap()
    }

    fn gaussian_complex(n_dim: usize, n: usize, seed: u64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let root_half = 0.5f64.sqrt();
        let x = CMatrix::from_fn(n_dim, n, |_, _| {
            C64::new(
                rng.sample::<f64, _>(StandardNormal) * root_half,
                rng.sample::<f64, _>(StandardNormal) * root_half,
            )
        });
        SampleSet::new(x, n_dim, true, None).unwrap()
    }

    #[test]
    fn sample_covariance_single_outer_product() {
        let x = CMatrix::from_column_slice(2, 1, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let s = SampleSet::new(x, 2, false, None).unwrap();
        let shat = sample_covariance(&s);
        assert_relative_eq!(shat[(0, 0)].re, 1.0);
        assert_relative_eq!(shat[(0, 1)].re, 0.0);
        assert_relative_eq!(shat[(1, 1)].re, 0.0);
    }

    #[test]
    fn sample_covariance_quadratic_scaling() {
        let s = gaussian_real(4, 9, 7);
        let scaled = SampleSet::new(s.matrix().map(|v| v * 3.0), 4, false, None).unwrap();
        let a = sample_covariance(&s);
        let b = sample_covariance(&scaled);
        assert!((b - a.map(|v| v * 9.0)).norm() < 1e-12);
    }

    #[test]
    fn sample_covariance_eigenvalues_near_mp_support() {
        // Real standard normal entries, N = 50, n = 200: all eigenvalues of
        // the SCM inside (1 +- sqrt(0.25))^2 with margin 0.15, in at least
        // 48 of 50 seeded trials.
        let (lo, hi) = ((1.0f64 - 0.5).powi(2), (1.0f64 + 0.5).powi(2));
        let mut inside = 0;
        for seed in 0..50 {
            let s = gaussian_real(50, 200, 1000 + seed);
            let ev = linalg::hermitian_eigenvalues_sorted(&sample_covariance(&s));
            if ev[0] >= lo - 0.15 && ev[ev.len() - 1] <= hi + 0.15 {
                inside += 1;
            }
        }
        assert!(inside >= 48, "only {inside}/50 trials inside the edges");
    }

    #[test]
    fn quadratic_forms_identity_and_scaled() {
        let s = gaussian_complex(5, 8, 3);
        let eye = CMatrix::identity(5, 5);
        let d1 = quadratic_forms(&s, &eye).unwrap();
        for (j, &d) in d1.iter().enumerate() {
            assert_relative_eq!(d, s.matrix().column(j).norm_squared() / 5.0, max_relative = 1e-12);
        }
        let d4 = quadratic_forms(&s, &eye.map(|v| v * 4.0)).unwrap();
        for (a, b) in d1.iter().zip(&d4) {
            assert_relative_eq!(*b, a / 4.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn quadratic_form_scalar_case() {
        let x = CMatrix::from_element(1, 1, C64::new(3.0, 0.0));
        let s = SampleSet::new(x, 1, false, None).unwrap();
        let z = CMatrix::from_element(1, 1, C64::new(2.0, 0.0));
        let d = quadratic_forms(&s, &z).unwrap();
        assert_relative_eq!(d[0], 4.5);
    }

    #[test]
    fn quadratic_forms_singular_z() {
        let s = gaussian_complex(3, 6, 5);
        let z = CMatrix::zeros(3, 3);
        assert!(matches!(
            quadratic_forms(&s, &z),
            Err(EstimatorError::Singular)
        ));
    }

    #[test]
    fn closed_form_fixed_point_equal_samples() {
        // N = 1, X = [2, 2, 2]: every d_i equals phi_inverse(1) = 1 and the
        // estimate is x^2 / phi_inverse(1) = 4 exactly.
        let x = CMatrix::from_row_slice(1, 3, &[C64::new(2.0, 0.0); 3]);
        let s = SampleSet::new(x, 1, false, None).unwrap();
        let w = WeightFunction::student_t(1.0).unwrap();
        let est = robust_fixed_point(&s, &w, 1e-13, 500).unwrap();
        assert_relative_eq!(est.matrix[(0, 0)].re, 4.0, max_relative = 1e-10);
        assert!(est.residual < 1e-12);
        for &d in &est.d {
            assert_relative_eq!(d, 1.0, max_relative = 1e-10);
        }
        // Degenerate scaled identity: scaled() equals the SCM exactly here.
        let shat = sample_covariance(&s);
        assert!((est.scaled() - shat).norm() < 1e-10);
    }

    #[test]
    fn permutation_of_columns_leaves_estimate_unchanged() {
        let s = gaussian_complex(6, 24, 11);
        let w = WeightFunction::huber(2.0).unwrap();
        let est = robust_fixed_point(&s, &w, 1e-11, 500).unwrap();

        let perm: Vec<usize> = (0..24).rev().collect();
        let mut xp = CMatrix::zeros(6, 24);
        for (dst, &src) in perm.iter().enumerate() {
            xp.set_column(dst, &s.matrix().column(src));
        }
        let sp = SampleSet::new(xp, 6, true, None).unwrap();
        let est_p = robust_fixed_point(&sp, &w, 1e-11, 500).unwrap();
        assert!((est.matrix - est_p.matrix).norm() < 1e-9);
    }

    #[test]
    fn scale_equivariance() {
        let s = gaussian_real(20, 80, 21);
        let w = WeightFunction::student_t(1.0).unwrap();
        let est = robust_fixed_point(&s, &w, 1e-11, 500).unwrap();
        let scaled_set =
            SampleSet::new(s.matrix().map(|v| v * 2.0), 20, false, None).unwrap();
        let est2 = robust_fixed_point(&scaled_set, &w, 1e-11, 500).unwrap();
        let diff = (&est2.matrix - est.matrix.map(|v| v * 4.0)).norm() / est2.matrix.norm();
        assert!(diff < 1e-8, "relative difference {diff}");
    }

    #[test]
    fn fixed_point_residual_and_phi_band() {
        let s = gaussian_complex(100, 400, 31);
        let w = WeightFunction::huber(2.0).unwrap();
        let est = robust_fixed_point(&s, &w, 1e-10, 500).unwrap();
        let norm = linalg::hermitian_spectral_norm(&est.matrix);
        assert!(est.residual <= 10.0 * 1e-10 * norm.max(1.0));
        // Converged d_i reproduce the quadratic forms of the returned matrix.
        let d_check = quadratic_forms(&s, &est.matrix).unwrap();
        for (a, b) in est.d.iter().zip(&d_check) {
            assert_relative_eq!(*a, *b, max_relative = 1e-9);
        }
        // phi(d_i) concentrates around 1 at this aspect ratio.
        for &d in &est.d {
            let phi = w.eval_phi(d).unwrap();
            assert!((0.7..1.3).contains(&phi), "phi(d) = {phi}");
        }
    }

    #[test]
    fn uniqueness_from_different_starts() {
        let s = gaussian_complex(15, 60, 43);
        let w = WeightFunction::student_t(1.0).unwrap();
        let from_identity = robust_fixed_point(&s, &w, 1e-12, 500).unwrap();
        let start = CMatrix::identity(15, 15).map(|v| v * 5.0);
        let from_scaled = robust_fixed_point_from(&s, &w, start, 1e-12, 500).unwrap();
        let gap = linalg::hermitian_spectral_norm(&(&from_identity.matrix - &from_scaled.matrix));
        assert!(gap < 1e-8, "gap {gap}");
    }

    #[test]
    fn iterates_remain_hermitian_positive_definite() {
        let s = gaussian_complex(10, 50, 5);
        let w = WeightFunction::huber(1.5).unwrap();
        let est = robust_fixed_point(&s, &w, 1e-10, 500).unwrap();
        let ev = linalg::hermitian_eigenvalues_sorted(&est.matrix);
        assert!(ev[0] > 0.0);
        let asym = (&est.matrix - est.matrix.adjoint()).norm();
        assert!(asym < 1e-12 * est.matrix.norm());
    }

    #[test]
    fn span_deficient_rejected() {
        // Rank-1 data in dimension 2.
        let col = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        let mut x = CMatrix::zeros(2, 8);
        for j in 0..8 {
            x.set_column(j, &col.map(|v| v * (j as f64 + 1.0)));
        }
        let s = SampleSet::new(x, 2, false, None).unwrap();
        let w = WeightFunction::student_t(1.0).unwrap();
        assert!(matches!(
            robust_fixed_point(&s, &w, 1e-10, 100),
            Err(EstimatorError::SpanDeficient { .. })
        ));
    }

    #[test]
    fn too_few_samples_rejected() {
        let s = gaussian_complex(4, 4, 1);
        let w = WeightFunction::student_t(1.0).unwrap();
        assert!(matches!(
            robust_fixed_point(&s, &w, 1e-10, 100),
            Err(EstimatorError::NotEnoughSamples { .. })
        ));
    }

    #[test]
    fn max_iter_exceeded_reports_residual() {
        let s = gaussian_complex(8, 32, 9);
        let w = WeightFunction::student_t(1.0).unwrap();
        match robust_fixed_point(&s, &w, 1e-14, 2) {
            Err(EstimatorError::NotConverged {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 2);
                assert!(residual.is_finite() && residual > 0.0);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn interference_matches_fixed_point() {
        let s = gaussian_complex(12, 48, 17);
        let w = WeightFunction::huber(2.0).unwrap();
        let est = robust_fixed_point(&s, &w, 1e-12, 500).unwrap();
        let q0 = vec![50.0; 48];
        let sol = interference_iterate(&s, &w, &q0, 1e-12, 500).unwrap();
        for (a, b) in est.d.iter().zip(&sol.q) {
            assert_relative_eq!(*a, *b, max_relative = 1e-8);
        }
    }

    #[test]
    fn interference_monotone_from_feasible_start() {
        let s = gaussian_complex(10, 40, 19);
        let w = WeightFunction::student_t(1.0).unwrap();
        let sol = interference_iterate(&s, &w, &vec![100.0; 40], 1e-11, 500).unwrap();
        for pair in sol.sup_trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-12 * pair[0].abs(),
                "sup trace increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn interference_closed_form_scalar() {
        let x = CMatrix::from_row_slice(1, 3, &[C64::new(2.0, 0.0); 3]);
        let s = SampleSet::new(x, 1, false, None).unwrap();
        let w = WeightFunction::student_t(1.0).unwrap();
        let sol = interference_iterate(&s, &w, &[10.0, 10.0, 10.0], 1e-12, 500).unwrap();
        for &q in &sol.q {
            assert_relative_eq!(q, 1.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn interference_rejects_bad_start() {
        let s = gaussian_complex(4, 16, 23);
        let w = WeightFunction::student_t(1.0).unwrap();
        assert!(matches!(
            interference_iterate(&s, &w, &vec![0.0; 16], 1e-10, 100),
            Err(EstimatorError::InvalidStart { .. })
        ));
        assert!(matches!(
            interference_iterate(&s, &w, &vec![1.0; 5], 1e-10, 100),
            Err(EstimatorError::InvalidStart { .. })
        ));
    }

    #[test]
    fn sample_set_validation() {
        assert!(matches!(
            SampleSet::new(CMatrix::zeros(0, 0), 0, false, None),
            Err(EstimatorError::InvalidSamples)
        ));
        let nan = CMatrix::from_element(1, 1, C64::new(f64::NAN, 0.0));
        assert!(matches!(
            SampleSet::new(nan, 1, false, None),
            Err(EstimatorError::InvalidSamples)
        ));
        assert!(matches!(
            SampleSet::new(CMatrix::identity(3, 3), 2, false, None),
            Err(EstimatorError::BadGeneratorDimension { .. })
        ));
    }
}
