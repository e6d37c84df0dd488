//! Random-matrix diagnostics: the deterministic-equivalent solver `e_N(z)`,
//! spectral-gap and eigenvalue-spacing metrics, quadratic-form concentration,
//! leave-one-out interlacing, resolvent identities, and the
//! Marchenko-Pastur reference edges.

use crate::datagen::EntryDistribution;
use crate::estimator::{self, CovarianceEstimate, EstimatorError, SampleSet};
use crate::linalg::{self, CMatrix, CVector, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RmtError {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("matrix dimensions do not match")]
    DimensionMismatch,
    #[error("matrix is singular or not positive definite")]
    Singular,
    #[error("no convergence after {iterations} iterations, residual {residual:.3e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("sample index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Solution of the deterministic-equivalent fixed point at a point `z < 0`.
#[derive(Debug, Clone)]
pub struct DeterministicEquivalent {
    pub z: f64,
    pub c: f64,
    /// The unique positive solution `e_N(z)`.
    pub e: f64,
    pub iterations: usize,
    /// `|e - rhs(e)| / e` after convergence.
    pub residual: f64,
}

/// Spectral comparison of a robust estimate against the SCM of the same data.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Eigenvalues of the robust estimate, ascending.
    pub eigenvalues_c_hat: Vec<f64>,
    /// Eigenvalues of the SCM, ascending.
    pub eigenvalues_s_hat: Vec<f64>,
    /// `|| phi_inverse(1) C_hat - S_hat ||`.
    pub norm_gap: f64,
    /// `max_i | phi_inverse(1) lambda_i(C_hat) - lambda_i(S_hat) |`.
    pub spacing_max: f64,
    /// `max_i | (1/N) x_i^* S_hat^{-1} x_i - 1 |`.
    pub concentration_max: f64,
}

/// Outcome of a leave-one-out interlacing check.
#[derive(Debug, Clone)]
pub struct InterlacingCheck {
    /// Spectrum of `(1/n) X X^*`, ascending.
    pub spectrum_full: Vec<f64>,
    /// Spectrum of `(1/n) X_(i) X_(i)^*`, ascending.
    pub spectrum_loo: Vec<f64>,
    pub pass: bool,
    /// Largest interlacing violation observed (0 when `pass`).
    pub max_violation: f64,
}

/// Empirical moments of `y^* A y - tr A` over independent draws of `y`.
#[derive(Debug, Clone)]
pub struct TraceProbe {
    pub mean: C64,
    /// Mean squared modulus around the empirical mean.
    pub variance: f64,
    pub trials: usize,
}

fn en_rhs(z: f64, c: f64, spectrum: &[f64], e: f64) -> f64 {
    let g = 1.0 / (1.0 + c * e);
    spectrum.iter().map(|&t| t / (g * t - z)).sum::<f64>() / spectrum.len() as f64
}

/// Solves `e = mean_t [ t / ((1 + c e)^{-1} t - z) ]` for the unique
/// positive root by damped fixed-point iteration from `e = 1`.
pub fn solve_en(
    z: f64,
    c: f64,
    spectrum_c: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<DeterministicEquivalent, RmtError> {
    solve_en_damped(z, c, spectrum_c, tol, max_iter, 0.5)
}

pub(crate) fn solve_en_damped(
    z: f64,
    c: f64,
    spectrum_c: &[f64],
    tol: f64,
    max_iter: usize,
    damping: f64,
) -> Result<DeterministicEquivalent, RmtError> {
    if !(z < 0.0) {
        return Err(RmtError::Domain(format!("z = {z} must be negative")));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(RmtError::Domain(format!("c = {c} must be in (0, 1)")));
    }
    if spectrum_c.is_empty() || spectrum_c.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(RmtError::Domain(
            "spectrum must be nonempty and nonnegative".into(),
        ));
    }
    let mut e = 1.0;
    for iteration in 1..=max_iter {
        let next = (1.0 - damping) * e + damping * en_rhs(z, c, spectrum_c, e);
        let change = (next - e).abs() / next.abs().max(f64::MIN_POSITIVE);
        e = next;
        if change <= tol {
            let residual = (e - en_rhs(z, c, spectrum_c, e)).abs() / e.max(f64::MIN_POSITIVE);
            return Ok(DeterministicEquivalent {
                z,
                c,
                e,
                iterations: iteration,
                residual,
            });
        }
    }
    let residual = (e - en_rhs(z, c, spectrum_c, e)).abs() / e.max(f64::MIN_POSITIVE);
    Err(RmtError::NotConverged {
        iterations: max_iter,
        residual,
    })
}

/// Spectral norm of `A - B` for Hermitian inputs.
pub fn spectral_norm_gap(a: &CMatrix, b: &CMatrix) -> Result<f64, RmtError> {
    if a.shape() != b.shape() {
        return Err(RmtError::DimensionMismatch);
    }
    Ok(linalg::hermitian_spectral_norm(&(a - b)))
}

/// Sorts both spectra ascending and returns
/// `max_i |scale * lambda_i(C_hat) - lambda_i(S_hat)|` with the per-index
/// list. By Weyl's inequality the maximum never exceeds the spectral norm of
/// `scale * C_hat - S_hat`.
pub fn eigenvalue_spacing(
    c_hat: &CMatrix,
    s_hat: &CMatrix,
    scale: f64,
) -> Result<(f64, Vec<f64>), RmtError> {
    if c_hat.shape() != s_hat.shape() {
        return Err(RmtError::DimensionMismatch);
    }
    let ev_c = linalg::hermitian_eigenvalues_sorted(c_hat);
    let ev_s = linalg::hermitian_eigenvalues_sorted(s_hat);
    let per_index: Vec<f64> = ev_c
        .iter()
        .zip(&ev_s)
        .map(|(&c, &s)| (scale * c - s).abs())
        .collect();
    let max = per_index.iter().copied().fold(0.0, f64::max);
    Ok((max, per_index))
}

/// `max_i |(1/N) x_i^* S_hat^{-1} x_i - 1|` and the per-sample deviations.
pub fn quadratic_concentration(s: &SampleSet) -> Result<(f64, Vec<f64>), RmtError> {
    let shat = estimator::sample_covariance(s);
    let d = estimator::quadratic_forms(s, &shat).map_err(|e| match e {
        EstimatorError::Singular => RmtError::Singular,
        other => RmtError::Estimator(other),
    })?;
    let deviations: Vec<f64> = d.iter().map(|&di| (di - 1.0).abs()).collect();
    let max = deviations.iter().copied().fold(0.0, f64::max);
    Ok((max, deviations))
}

/// Compares the spectrum of `(1/n) X X^*` with the spectrum of the same
/// matrix after removing sample `index` (keeping the `1/n` normalization),
/// and verifies the interlacing ordering.
pub fn leave_one_out_interlacing(
    s: &SampleSet,
    index: usize,
) -> Result<InterlacingCheck, RmtError> {
    let n = s.n_samples();
    if index >= n {
        return Err(RmtError::IndexOutOfRange { index, n });
    }
    let full = estimator::sample_covariance(s);
    let x = s.matrix();
    let xi = x.column(index);
    let mut loo = &full - (&xi * xi.adjoint()).map(|v| v / n as f64);
    linalg::hermitize(&mut loo);

    let spectrum_full = linalg::hermitian_eigenvalues_sorted(&full);
    let spectrum_loo = linalg::hermitian_eigenvalues_sorted(&loo);
    let n_dim = spectrum_full.len();
    let slack = 1e-10 * spectrum_full[n_dim - 1].abs().max(1.0);
    let mut max_violation: f64 = 0.0;
    for k in 0..n_dim {
        // lambda_k(loo) <= lambda_k(full) <= lambda_{k+1}(loo).
        max_violation = max_violation.max(spectrum_loo[k] - spectrum_full[k]);
        if k + 1 < n_dim {
            max_violation = max_violation.max(spectrum_full[k] - spectrum_loo[k + 1]);
        }
    }
    Ok(InterlacingCheck {
        spectrum_full,
        spectrum_loo,
        pass: max_violation <= slack,
        max_violation: max_violation.max(0.0),
    })
}

/// Residual of the rank-one resolvent identity
/// `x^*(A + t x x^*)^{-1} x = x^* A^{-1} x / (1 + t x^* A^{-1} x)`.
/// Exact up to rounding whenever both inverses exist.
pub fn mil_check(a: &CMatrix, x: &CVector, t: f64) -> Result<f64, RmtError> {
    if a.nrows() != a.ncols() || a.nrows() != x.len() {
        return Err(RmtError::DimensionMismatch);
    }
    let a_inv_x = linalg::lu_solve(a, x).map_err(|_| RmtError::Singular)?;
    let q = (x.adjoint() * &a_inv_x)[(0, 0)];
    let perturbed = a + (x * x.adjoint()).map(|v| v * t);
    let p_inv_x = linalg::lu_solve(&perturbed, x).map_err(|_| RmtError::Singular)?;
    let lhs = (x.adjoint() * &p_inv_x)[(0, 0)];
    let rhs = q / (C64::new(1.0, 0.0) + q * t);
    Ok((lhs - rhs).norm())
}

/// Gap `|tr B (A + v v^* + x I)^{-1} - tr B (A + x I)^{-1}|` and its bound
/// `||B|| / x` for nonnegative definite `A`, `B` and `x > 0`.
pub fn rank_one_perturbation_gap(
    b: &CMatrix,
    a: &CMatrix,
    v: &CVector,
    x: f64,
) -> Result<(f64, f64), RmtError> {
    if a.shape() != b.shape() || a.nrows() != v.len() {
        return Err(RmtError::DimensionMismatch);
    }
    if !(x > 0.0) {
        return Err(RmtError::Domain(format!("x = {x} must be positive")));
    }
    let n = a.nrows();
    let shifted = a + CMatrix::identity(n, n).map(|id| id * x);
    let perturbed = &shifted + v * v.adjoint();
    let inv_shifted = linalg::hpd_inverse(&shifted).map_err(|_| RmtError::Singular)?;
    let inv_perturbed = linalg::hpd_inverse(&perturbed).map_err(|_| RmtError::Singular)?;
    let tr = |m: &CMatrix| -> f64 { (b * m).diagonal().iter().map(|v| v.re).sum() };
    let gap = (tr(&inv_perturbed) - tr(&inv_shifted)).abs();
    let bound = linalg::hermitian_spectral_norm(b) / x;
    debug_assert!(gap <= bound * (1.0 + 1e-9) + 1e-12);
    Ok((gap, bound))
}

/// Draws `trials` independent vectors `y` from `dist` and reports the
/// empirical mean and variance of `y^* A y - tr A`. The variance scales
/// like `tr(A A^*)`.
pub fn trace_concentration_probe(
    a: &CMatrix,
    dist: &EntryDistribution,
    trials: usize,
    seed: u64,
) -> TraceProbe {
    debug_assert_eq!(dist.variance(), 1.0);
    let n = a.nrows();
    let trace: C64 = a.diagonal().iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deviations = Vec::with_capacity(trials);
    let mut y = CVector::zeros(n);
    for _ in 0..trials {
        for i in 0..n {
            y[i] = dist.draw(&mut rng);
        }
        let quad = (y.adjoint() * a * &y)[(0, 0)];
        deviations.push(quad - trace);
    }
    let mean: C64 = deviations.iter().sum::<C64>() / C64::new(trials as f64, 0.0);
    let variance = deviations
        .iter()
        .map(|d| (d - mean).norm_sqr())
        .sum::<f64>()
        / trials as f64;
    TraceProbe {
        mean,
        variance,
        trials,
    }
}

/// Support edges `scale * (1 -+ sqrt(c))^2` of the Marchenko-Pastur law for
/// a scaled-identity population covariance.
pub fn mp_edges(c: f64, scale: f64) -> Result<(f64, f64), RmtError> {
    if !(c > 0.0 && c < 1.0) {
        return Err(RmtError::Domain(format!("c = {c} must be in (0, 1)")));
    }
    if !(scale > 0.0) {
        return Err(RmtError::Domain(format!("scale = {scale} must be positive")));
    }
    let root = c.sqrt();
    Ok((scale * (1.0 - root).powi(2), scale * (1.0 + root).powi(2)))
}

/// Full spectral comparison of a converged robust estimate against the SCM
/// of the same samples.
pub fn spectrum_report(
    est: &CovarianceEstimate,
    s: &SampleSet,
) -> Result<SpectrumReport, RmtError> {
    let shat = estimator::sample_covariance(s);
    let scaled = est.scaled();
    let norm_gap = spectral_norm_gap(&scaled, &shat)?;
    let eigenvalues_c_hat = linalg::hermitian_eigenvalues_sorted(&est.matrix);
    let eigenvalues_s_hat = linalg::hermitian_eigenvalues_sorted(&shat);
    let spacing_max = eigenvalues_c_hat
        .iter()
        .zip(&eigenvalues_s_hat)
        .map(|(&c, &shat_ev)| (est.scale_reference * c - shat_ev).abs())
        .fold(0.0, f64::max);
    let (concentration_max, _) = quadratic_concentration(s)?;
    Ok(SpectrumReport {
        eigenvalues_c_hat,
        eigenvalues_s_hat,
        norm_gap,
        spacing_max,
        concentration_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_samples, CovarianceModel};
    use approx::assert_relative_eq;
    use rand::prelude::*;

    fn random_hpd(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let m = CMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        &m * m.adjoint() + CMatrix::identity(n, n)
    }

    fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> CVector {
        CVector::from_fn(n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn en_analytic_root_identity_covariance() {
        // C = I, c = 1/2, z = -1 reduces to e^2 + 3e - 2 = 0.
        let sol = solve_en(-1.0, 0.5, &[1.0; 8], 1e-13, 500).unwrap();
        let expected = (-3.0 + 17.0f64.sqrt()) / 2.0;
        assert!((sol.e - expected).abs() < 1e-9, "e = {}", sol.e);
        assert!(sol.residual < 1e-10);
    }

    #[test]
    fn en_vanishes_for_deep_negative_z() {
        let sol = solve_en(-1e6, 0.5, &[1.0; 4], 1e-12, 500).unwrap();
        assert!(sol.e < 2e-6, "e = {}", sol.e);
    }

    #[test]
    fn en_increasing_in_z() {
        let spectrum = [1.0; 16];
        let e_half = solve_en(-0.5, 0.5, &spectrum, 1e-12, 500).unwrap().e;
        let e_one = solve_en(-1.0, 0.5, &spectrum, 1e-12, 500).unwrap().e;
        let e_two = solve_en(-2.0, 0.5, &spectrum, 1e-12, 500).unwrap().e;
        assert!(e_half > e_one && e_one > e_two);
    }

    #[test]
    fn en_independent_of_damping() {
        let spectrum = [0.5, 1.0, 1.5, 3.0];
        let a = solve_en_damped(-1.0, 0.3, &spectrum, 1e-13, 1000, 0.5).unwrap();
        let b = solve_en_damped(-1.0, 0.3, &spectrum, 1e-13, 1000, 0.2).unwrap();
        assert!((a.e - b.e).abs() < 1e-9);
    }

    #[test]
    fn en_domain_errors() {
        assert!(matches!(
            solve_en(1.0, 0.5, &[1.0], 1e-10, 100),
            Err(RmtError::Domain(_))
        ));
        assert!(matches!(
            solve_en(-1.0, 1.5, &[1.0], 1e-10, 100),
            Err(RmtError::Domain(_))
        ));
        assert!(matches!(
            solve_en(-1.0, 0.5, &[], 1e-10, 100),
            Err(RmtError::Domain(_))
        ));
    }

    #[test]
    fn spectral_norm_gap_hand_cases() {
        let a = CMatrix::identity(2, 2);
        assert_eq!(spectral_norm_gap(&a, &a).unwrap(), 0.0);

        let mut d1 = CMatrix::zeros(2, 2);
        d1[(0, 0)] = C64::new(1.0, 0.0);
        d1[(1, 1)] = C64::new(2.0, 0.0);
        let mut d2 = CMatrix::zeros(2, 2);
        d2[(0, 0)] = C64::new(1.0, 0.0);
        d2[(1, 1)] = C64::new(5.0, 0.0);
        assert_relative_eq!(spectral_norm_gap(&d1, &d2).unwrap(), 3.0);

        // I - [[0,1],[1,0]] has eigenvalues {0, 2}.
        let mut flip = CMatrix::zeros(2, 2);
        flip[(0, 1)] = C64::new(1.0, 0.0);
        flip[(1, 0)] = C64::new(1.0, 0.0);
        assert_relative_eq!(spectral_norm_gap(&a, &flip).unwrap(), 2.0, max_relative = 1e-12);

        assert!(matches!(
            spectral_norm_gap(&a, &CMatrix::identity(3, 3)),
            Err(RmtError::DimensionMismatch)
        ));
    }

    #[test]
    fn spacing_zero_for_identical_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_hpd(5, &mut rng);
        let (max, list) = eigenvalue_spacing(&a, &a, 1.0).unwrap();
        assert!(max < 1e-12);
        assert_eq!(list.len(), 5);
    }

    #[test]
    fn spacing_bounded_by_norm_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = random_hpd(6, &mut rng);
            let b = random_hpd(6, &mut rng);
            let scale = rng.random_range(0.5..2.0);
            let (spacing, _) = eigenvalue_spacing(&a, &b, scale).unwrap();
            let gap = spectral_norm_gap(&a.map(|v| v * scale), &b).unwrap();
            assert!(spacing <= gap + 1e-10, "spacing {spacing} > gap {gap}");
        }
    }

    #[test]
    fn concentration_zero_for_identical_columns() {
        // One repeated column: (1/N) x^* Shat^{-1} x = 1 exactly.
        let col = CVector::from_vec(vec![C64::new(1.0, 0.5), C64::new(-0.3, 0.2)]);
        let mut x = CMatrix::zeros(2, 6);
        for j in 0..6 {
            x.set_column(j, &col);
        }
        // Shat is rank one, so regularize: use scalar case instead.
        let scalar = CMatrix::from_row_slice(1, 4, &[C64::new(2.0, 0.0); 4]);
        let s = SampleSet::new(scalar, 1, false, None).unwrap();
        let (max, devs) = quadratic_concentration(&s).unwrap();
        assert!(max < 1e-12);
        assert_eq!(devs.len(), 4);
        drop(x);
    }

    #[test]
    fn concentration_scalar_formula() {
        let x = CMatrix::from_row_slice(1, 3, &[
            C64::new(1.0, 0.0),
            C64::new(2.0, 0.0),
            C64::new(3.0, 0.0),
        ]);
        let s = SampleSet::new(x, 1, false, None).unwrap();
        let shat = (1.0 + 4.0 + 9.0) / 3.0;
        let (_, devs) = quadratic_concentration(&s).unwrap();
        for (value, xi) in devs.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*value, (xi * xi / shat - 1.0f64).abs(), max_relative = 1e-12);
        }
    }

    #[test]
    fn concentration_tightens_with_dimension() {
        let model = CovarianceModel::Identity;
        let dist = EntryDistribution::GaussianComplex;
        let median = |n_dim: usize, n: usize| -> f64 {
            let mut values: Vec<f64> = (0..30)
                .map(|t| {
                    let s = generate_samples(&model, &dist, n_dim, n_dim, n, 9000 + t).unwrap();
                    quadratic_concentration(&s).unwrap().0
                })
                .collect();
            values.sort_by(f64::total_cmp);
            values[15]
        };
        let coarse = median(50, 100);
        let fine = median(200, 400);
        assert!(fine < coarse, "no shrink: {fine} vs {coarse}");
    }

    #[test]
    fn interlacing_exact_small_case() {
        // N = 2, n = 3 hand-checkable integers.
        let x = CMatrix::from_row_slice(
            2,
            3,
            &[
                C64::new(1.0, 0.0),
                C64::new(2.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(2.0, 0.0),
            ],
        );
        let s = SampleSet::new(x, 2, false, None).unwrap();
        for i in 0..3 {
            let check = leave_one_out_interlacing(&s, i).unwrap();
            assert!(check.pass, "violation {}", check.max_violation);
            assert_eq!(check.spectrum_full.len(), 2);
        }
        // Direct 2x2 oracle for i = 2: X_(2) = [[1,2],[0,1]] / sqrt(n).
        let check = leave_one_out_interlacing(&s, 2).unwrap();
        let g = nalgebra::Matrix2::<f64>::new(5.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0);
        let tr = g.trace();
        let det = g.determinant();
        let disc: f64 = (tr * tr / 4.0 - det).sqrt();
        assert_relative_eq!(check.spectrum_loo[0], tr / 2.0 - disc, max_relative = 1e-10);
        assert_relative_eq!(check.spectrum_loo[1], tr / 2.0 + disc, max_relative = 1e-10);
    }

    #[test]
    fn interlacing_random_matrices() {
        let dist = EntryDistribution::GaussianComplex;
        let s = generate_samples(&CovarianceModel::Identity, &dist, 20, 20, 60, 5).unwrap();
        for i in [0, 7, 59] {
            let check = leave_one_out_interlacing(&s, i).unwrap();
            assert!(check.pass, "violation {}", check.max_violation);
        }
        assert!(matches!(
            leave_one_out_interlacing(&s, 60),
            Err(RmtError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn mil_identity_basis_vector() {
        let a = CMatrix::identity(3, 3);
        let mut x = CVector::zeros(3);
        x[0] = C64::new(1.0, 0.0);
        // Both sides are 1/2.
        let residual = mil_check(&a, &x, 1.0).unwrap();
        assert!(residual < 1e-15);
        let residual_zero_t = mil_check(&a, &x, 0.0).unwrap();
        assert!(residual_zero_t < 1e-15);
    }

    #[test]
    fn mil_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.random_range(2..12);
            let a = random_hpd(n, &mut rng);
            let x = random_vector(n, &mut rng);
            // Nonnegative t keeps A + t x x^* away from singularity.
            let t = rng.random_range(0.0..2.0);
            let q = linalg::quadratic_form(&linalg::hpd_inverse(&a).unwrap(), &x);
            let residual = mil_check(&a, &x, t).unwrap();
            assert!(
                residual < 1e-12 * (1.0 + q.abs()),
                "residual {residual} vs q {q}"
            );
        }
    }

    #[test]
    fn rank_one_scalar_case() {
        let b = CMatrix::identity(1, 1);
        let a = CMatrix::zeros(1, 1);
        let v = CVector::from_vec(vec![C64::new(1.0, 0.0)]);
        let (gap, bound) = rank_one_perturbation_gap(&b, &a, &v, 1.0).unwrap();
        assert_relative_eq!(gap, 0.5);
        assert_relative_eq!(bound, 1.0);
    }

    #[test]
    fn rank_one_zero_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_hpd(4, &mut rng);
        let b = random_hpd(4, &mut rng);
        let (gap, _) = rank_one_perturbation_gap(&b, &a, &CVector::zeros(4), 0.7).unwrap();
        assert!(gap < 1e-12);
    }

    #[test]
    fn rank_one_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(1..20);
            let a = random_hpd(n, &mut rng);
            let b = random_hpd(n, &mut rng);
            let v = random_vector(n, &mut rng);
            let x = rng.random_range(0.05..3.0);
            let (gap, bound) = rank_one_perturbation_gap(&b, &a, &v, x).unwrap();
            assert!(gap <= bound * (1.0 + 1e-9), "gap {gap} > bound {bound}");
        }
    }

    #[test]
    fn trace_probe_zero_matrix() {
        let probe = trace_concentration_probe(
            &CMatrix::zeros(5, 5),
            &EntryDistribution::GaussianComplex,
            50,
            1,
        );
        assert_eq!(probe.mean, C64::new(0.0, 0.0));
        assert_eq!(probe.variance, 0.0);
    }

    #[test]
    fn trace_probe_identity_chi_square() {
        let n = 64;
        let probe = trace_concentration_probe(
            &CMatrix::identity(n, n),
            &EntryDistribution::GaussianComplex,
            2000,
            7,
        );
        let ratio = probe.variance / n as f64;
        assert!((0.7..1.3).contains(&ratio), "variance ratio {ratio}");
        assert!(probe.mean.norm() < 1.0);
    }

    #[test]
    fn trace_probe_variance_shrinks_with_normalized_identity() {
        // A = I/N: the variance scales like tr(A A^*) = 1/N.
        let var = |n: usize| {
            let a = CMatrix::identity(n, n).map(|v| v / n as f64);
            trace_concentration_probe(&a, &EntryDistribution::GaussianComplex, 2000, 11).variance
        };
        let coarse = var(50);
        let fine = var(200);
        assert!(
            coarse / fine >= 2.5,
            "variance ratio {} too small",
            coarse / fine
        );
    }

    #[test]
    fn mp_edges_values() {
        let (lo, hi) = mp_edges(0.25, 1.0).unwrap();
        assert_relative_eq!(lo, 0.25);
        assert_relative_eq!(hi, 2.25);
        let (lo2, hi2) = mp_edges(0.5, 2.0).unwrap();
        assert_relative_eq!(lo2, 0.17157287525381, max_relative = 1e-10);
        assert_relative_eq!(hi2, 5.82842712474619, max_relative = 1e-10);
        let (lo3, hi3) = mp_edges(1e-12, 1.0).unwrap();
        assert!((lo3 - 1.0).abs() < 1e-5 && (hi3 - 1.0).abs() < 1e-5);
        assert!(mp_edges(1.5, 1.0).is_err());
    }

    #[test]
    fn spectrum_report_consistency() {
        let dist = EntryDistribution::GaussianComplex;
        let s = generate_samples(&CovarianceModel::Identity, &dist, 30, 30, 120, 17).unwrap();
        let w = crate::weights::WeightFunction::huber(2.0).unwrap();
        let est = estimator::robust_fixed_point(&s, &w, 1e-10, 500).unwrap();
        let report = spectrum_report(&est, &s).unwrap();
        assert_eq!(report.eigenvalues_c_hat.len(), 30);
        assert!(report.spacing_max <= report.norm_gap + 1e-10);
        assert!(report.norm_gap < 1.0);
        assert!(report.concentration_max > 0.0);
    }
}
