//! Weight-function families for the robust scatter estimator.
//!
//! A weight function `u` must be nonnegative, nonincreasing and continuous on
//! `[0, inf)`, and `phi(s) = s*u(s)` must be nondecreasing and bounded by a
//! supremum `phi_inf > 1`, strictly increasing wherever `phi(s) < phi_inf`.
//! Two classical families are provided: the Huber weight (constant up to a
//! kink, then decaying like `phi_inf / s`) and the Student-t weight
//! `u(s) = (1 + t) / (t + s)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WeightError {
    #[error("parameter {name} = {value} is out of range: {constraint}")]
    Parameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("u and phi are defined on s >= 0, got s = {0}")]
    NegativeArgument(f64),
    #[error("phi_inverse needs 0 < y < phi_inf = {phi_inf}, got y = {y}")]
    OutOfRange { y: f64, phi_inf: f64 },
    #[error("validation grid must be nonempty and strictly increasing")]
    BadGrid,
}

/// A validated weight function, immutable after construction.
///
/// The JSON form matches the harness config file:
/// `{"family":"huber","phi_inf":2.0}` or `{"family":"student_t","t":1.0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightFunction {
    Huber { phi_inf: f64 },
    StudentT { t: f64 },
}

impl WeightFunction {
    /// Huber weight with supremum `phi_inf > 1`.
    pub fn huber(phi_inf: f64) -> Result<Self, WeightError> {
        if !(phi_inf > 1.0) || !phi_inf.is_finite() {
            return Err(WeightError::Parameter {
                name: "phi_inf",
                value: phi_inf,
                constraint: "must be finite and > 1",
            });
        }
        Ok(WeightFunction::Huber { phi_inf })
    }

    /// Student-t weight `u(s) = (1 + t)/(t + s)` with `t > 0`.
    pub fn student_t(t: f64) -> Result<Self, WeightError> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(WeightError::Parameter {
                name: "t",
                value: t,
                constraint: "must be finite and > 0",
            });
        }
        Ok(WeightFunction::StudentT { t })
    }

    /// The supremum `phi_inf` of `phi`.
    pub fn phi_inf(&self) -> f64 {
        match *self {
            WeightFunction::Huber { phi_inf } => phi_inf,
            WeightFunction::StudentT { t } => 1.0 + t,
        }
    }

    /// Rejects parameter combinations sneaked past the constructors
    /// (e.g. through deserialization).
    pub fn check_params(&self) -> Result<(), WeightError> {
        match *self {
            WeightFunction::Huber { phi_inf } => Self::huber(phi_inf).map(|_| ()),
            WeightFunction::StudentT { t } => Self::student_t(t).map(|_| ()),
        }
    }

    /// Evaluates the weight `u(s)` for `s >= 0`.
    pub fn eval_u(&self, s: f64) -> Result<f64, WeightError> {
        if !(s >= 0.0) {
            return Err(WeightError::NegativeArgument(s));
        }
        Ok(self.u_at(s))
    }

    /// Evaluates `phi(s) = s * u(s)` for `s >= 0`.
    pub fn eval_phi(&self, s: f64) -> Result<f64, WeightError> {
        if !(s >= 0.0) {
            return Err(WeightError::NegativeArgument(s));
        }
        Ok(self.phi_at(s))
    }

    /// The unique `s` on the increasing region of `phi` with `phi(s) = y`,
    /// for `0 < y < phi_inf`.
    ///
    /// Both families admit a closed form; `phi_inverse_bisect` provides the
    /// generic fallback for future families and serves as an independent
    /// cross-check in tests.
    pub fn phi_inverse(&self, y: f64) -> Result<f64, WeightError> {
        let phi_inf = self.phi_inf();
        if !(y > 0.0) || y >= phi_inf {
            return Err(WeightError::OutOfRange { y, phi_inf });
        }
        Ok(match *self {
            // phi(s) = phi_inf * s / (phi_inf - 1) on the linear branch.
            WeightFunction::Huber { phi_inf } => y * (phi_inf - 1.0) / phi_inf,
            // phi(s) = (1 + t) s / (t + s)  =>  s = y t / (1 + t - y).
            WeightFunction::StudentT { t } => y * t / (1.0 + t - y),
        })
    }

    /// The scale constant `phi_inverse(1)` linking the robust estimate to the
    /// sample covariance matrix. Well defined because `phi_inf > 1`.
    pub fn scale_reference(&self) -> f64 {
        self.phi_inverse(1.0)
            .expect("phi_inf > 1 guarantees 1 is attained")
    }

    /// Numerically checks the admissibility conditions on a grid.
    pub fn validate(&self, grid: &[f64]) -> Result<ValidationReport, WeightError> {
        if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(WeightError::BadGrid);
        }
        Ok(validate_u_fn(|s| self.u_at(s), self.phi_inf(), grid))
    }

    pub(crate) fn u_at(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0);
        match *self {
            WeightFunction::Huber { phi_inf } => {
                let kink = phi_inf - 1.0;
                if s <= kink {
                    // Continuous extension of phi(s)/s at the kink and at 0.
                    phi_inf / kink
                } else {
                    phi_inf / s
                }
            }
            WeightFunction::StudentT { t } => (1.0 + t) / (t + s),
        }
    }

    pub(crate) fn phi_at(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0);
        match *self {
            WeightFunction::Huber { phi_inf } => {
                let kink = phi_inf - 1.0;
                if s <= kink {
                    phi_inf * s / kink
                } else {
                    phi_inf
                }
            }
            WeightFunction::StudentT { t } => (1.0 + t) * s / (t + s),
        }
    }

    /// Generic inverse of `phi` by bisection, to 1e-12 relative accuracy.
    pub fn phi_inverse_bisect(&self, y: f64) -> Result<f64, WeightError> {
        let phi_inf = self.phi_inf();
        if !(y > 0.0) || y >= phi_inf {
            return Err(WeightError::OutOfRange { y, phi_inf });
        }
        let mut hi = 1.0;
        while self.phi_at(hi) < y {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(WeightError::OutOfRange { y, phi_inf });
            }
        }
        let mut lo = 0.0;
        loop {
            let mid = 0.5 * (lo + hi);
            if self.phi_at(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi {
                return Ok(0.5 * (lo + hi));
            }
        }
    }
}

impl std::fmt::Display for WeightFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            WeightFunction::Huber { phi_inf } => write!(f, "huber:{phi_inf}"),
            WeightFunction::StudentT { t } => write!(f, "student_t:{t}"),
        }
    }
}

/// Compact descriptor form used on the command line, e.g. `student_t:1.0`
/// or `huber:2.0`.
impl std::str::FromStr for WeightFunction {
    type Err = WeightError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || WeightError::Parameter {
            name: "descriptor",
            value: f64::NAN,
            constraint: "expected huber:<phi_inf> or student_t:<t>",
        };
        let (family, param) = s.split_once(':').ok_or_else(bad)?;
        let value: f64 = param.parse().map_err(|_| bad())?;
        match family {
            "huber" => WeightFunction::huber(value),
            "student_t" => WeightFunction::student_t(value),
            _ => Err(bad()),
        }
    }
}

/// Outcome of a grid check of conditions on `u` and `phi`.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// True when no violation was found on the grid.
    pub valid: bool,
    /// The supremum `phi_inf` the function reports.
    pub phi_inf: f64,
    /// Human-readable violations, first detected first.
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn first_violation(&self) -> Option<&str> {
        self.violations.first().map(String::as_str)
    }
}

/// Checks an arbitrary weight function `u` against the admissibility
/// conditions on a strictly increasing grid. Used by
/// [`WeightFunction::validate`] and by tests that inject counterexamples.
pub fn validate_u_fn(u: impl Fn(f64) -> f64, phi_inf: f64, grid: &[f64]) -> ValidationReport {
    // Slack for exact-arithmetic comparisons on closed-form families.
    const SLACK: f64 = 1e-12;
    let mut violations = Vec::new();
    if !(phi_inf > 1.0) {
        violations.push(format!("phi_inf = {phi_inf} is not > 1"));
    }
    let mut prev: Option<(f64, f64, f64)> = None;
    for &s in grid {
        let us = u(s);
        let phis = s * us;
        if us < -SLACK {
            violations.push(format!("u({s}) = {us} is negative"));
        }
        if phis > phi_inf * (1.0 + SLACK) + SLACK {
            violations.push(format!("phi({s}) = {phis} exceeds phi_inf = {phi_inf}"));
        }
        if let Some((s0, u0, phi0)) = prev {
            if us > u0 + SLACK * u0.abs().max(1.0) {
                violations.push(format!("u not nonincreasing: u({s0}) = {u0} < u({s}) = {us}"));
            }
            if phis < phi0 - SLACK * phi0.abs().max(1.0) {
                violations.push(format!(
                    "phi not nondecreasing: phi({s0}) = {phi0} > phi({s}) = {phis}"
                ));
            }
        }
        prev = Some((s, us, phis));
    }
    ValidationReport {
        valid: violations.is_empty(),
        phi_inf,
        violations,
    }
}
