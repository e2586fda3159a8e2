//! Reference densities for the energy redistribution at a cross-cell
//! collision.

use serde::{Deserialize, Serialize};

use super::EstimatorError;

const QUAD_TOL: f64 = 1e-13;

fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    quadrature::integrate(f, a, b, QUAD_TOL).integral
}

/// CDF of Beta(1, M-1); a point mass at 1 when `M = 1`.
pub fn beta_participation_cdf(m: usize, x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else if m <= 1 {
        0.0
    } else {
        1.0 - (1.0 - x).powi(m as i32 - 1)
    }
}

/// Corrected participation density
/// `w(x) = (1 + c sqrt(x)) (1 - x)^k / K` on `(0, 1)`, with
/// `c = C E1 / E2` and `k = M - 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticipationDensity {
    pub coefficient: f64,
    pub exponent: f64,
    normalizer: f64,
}

impl ParticipationDensity {
    pub fn new(e1: f64, e2: f64, m: usize, c: f64) -> Result<Self, EstimatorError> {
        if m < 2 {
            return Err(EstimatorError::NotApplicable("participation density needs M >= 2".into()));
        }
        if !(e2 > 0.0) || !(e1 >= 0.0) {
            return Err(EstimatorError::InvalidInput(format!("energies ({e1}, {e2}) need E1 >= 0, E2 > 0")));
        }
        Self::with_exponent(c * e1 / e2, (m - 2) as f64)
    }

    /// Density with a free coefficient and `(1 - x)` exponent.
    pub fn with_exponent(coefficient: f64, exponent: f64) -> Result<Self, EstimatorError> {
        if !(coefficient > -1.0) || !(exponent > -1.0) || !coefficient.is_finite() || !exponent.is_finite() {
            return Err(EstimatorError::InvalidInput(format!(
                "coefficient {coefficient} must exceed -1 and exponent {exponent} must exceed -1"
            )));
        }
        let normalizer = integrate(|x| (1.0 + coefficient * x.sqrt()) * (1.0 - x).powf(exponent), 0.0, 1.0);
        Ok(Self { coefficient, exponent, normalizer })
    }

    /// `K` by quadrature.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// `K = 1/(k+1) + c B(3/2, k+1)`.
    pub fn closed_form_normalizer(&self) -> f64 {
        1.0 / (self.exponent + 1.0) + self.coefficient * statrs::function::beta::beta(1.5, self.exponent + 1.0)
    }

    pub fn density(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        (1.0 + self.coefficient * x.sqrt()) * (1.0 - x).powf(self.exponent) / self.normalizer
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            integrate(|u| self.density(u), 0.0, x)
        }
    }

    pub fn bin_probabilities(&self, edges: &[f64]) -> Vec<f64> {
        edges.windows(2).map(|w| integrate(|u| self.density(u), w[0].max(0.0), w[1].min(1.0))).collect()
    }

    /// Log-likelihood of `samples`.
    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        let (c, k) = (self.coefficient, self.exponent);
        let ln_k = self.normalizer.ln();
        samples.iter().map(|&x| (1.0 + c * x.sqrt()).ln() + k * (1.0 - x).ln() - ln_k).sum()
    }
}

/// Law of the post-collision energy `E1 sin^2(t1) + E2 cos^2(t2)` of disk 1
/// when the velocity angles relative to the contact normal have joint
/// density proportional to the positive part of
/// `sqrt(E1) cos(t1) - sqrt(E2) cos(t2)`.
///
/// For fixed `t2` the `t1` integral is done in closed form; the remaining
/// `t2` integral uses double-exponential quadrature split at every kink of
/// the integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostCollisionOracle {
    pub e1: f64,
    pub e2: f64,
    normalizer: f64,
}

impl PostCollisionOracle {
    pub fn new(e1: f64, e2: f64) -> Result<Self, EstimatorError> {
        if !(e1 >= 0.0) || !(e2 >= 0.0) || !(e1 + e2 > 0.0) || !(e1 + e2).is_finite() {
            return Err(EstimatorError::InvalidInput(format!("energies ({e1}, {e2}) must be nonnegative with positive sum")));
        }
        let mut oracle = Self { e1, e2, normalizer: 1.0 };
        if e1 > 0.0 {
            oracle.normalizer = oracle.integrate_theta(e1 + e2, |w| oracle.cdf_kernel(w, f64::INFINITY));
        }
        Ok(oracle)
    }

    /// `L`: the angular integral over `[0, pi]` of the approach weight.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn support(&self) -> (f64, f64) {
        (0.0, self.e1 + self.e2)
    }

    fn g(&self, u: f64, c2: f64) -> f64 {
        let u = u.clamp(-1.0, 1.0);
        -self.e1.sqrt() * (1.0 - u * u).max(0.0).sqrt() - c2 * u.asin()
    }

    /// Weight of `{Y <= y}` at `cos t2 = w`, integrated over `t1`.
    fn cdf_kernel(&self, w: f64, y: f64) -> f64 {
        let a = self.e1.sqrt();
        let c2 = self.e2.sqrt() * w;
        let r = c2 / a;
        if r >= 1.0 {
            return 0.0;
        }
        let s = y - self.e2 * w * w;
        if s <= 0.0 {
            return 0.0;
        }
        let lo_all = r.max(-1.0);
        if s >= self.e1 {
            return 2.0 * (self.g(1.0, c2) - self.g(lo_all, c2));
        }
        let q = (1.0 - s / self.e1).sqrt();
        let mut total = 0.0;
        let hi_lo = q.max(r);
        if hi_lo < 1.0 {
            total += self.g(1.0, c2) - self.g(hi_lo, c2);
        }
        if lo_all < -q {
            total += self.g(-q, c2) - self.g(lo_all, c2);
        }
        2.0 * total
    }

    fn density_kernel(&self, w: f64, y: f64) -> f64 {
        let a = self.e1.sqrt();
        let c2 = self.e2.sqrt() * w;
        let s = y - self.e2 * w * w;
        if s <= 0.0 || s >= self.e1 {
            return 0.0;
        }
        let q = (1.0 - s / self.e1).sqrt();
        if q <= 0.0 {
            return 0.0;
        }
        ((a * q - c2).max(0.0) + (-a * q - c2).max(0.0)) / (q * (self.e1 * s).sqrt())
    }

    /// Integrates `f(cos t)` over `t` in `[0, pi]`, split where `cos t`
    /// crosses a kink of the kernels at level `y`.
    fn integrate_theta<F: Fn(f64) -> f64>(&self, y: f64, f: F) -> f64 {
        let mut cuts = vec![0.0, std::f64::consts::PI];
        let mut add = |c: f64| {
            if c.is_finite() && c.abs() < 1.0 {
                cuts.push(c.acos());
                cuts.push((-c).acos());
            }
        };
        if self.e2 > 0.0 {
            add((self.e1 / self.e2).sqrt());
            add((y / self.e2).sqrt());
            if y > self.e1 {
                add(((y - self.e1) / self.e2).sqrt());
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2).map(|p| integrate(|t| f(t.cos()), p[0], p[1])).sum()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let (lo, hi) = self.support();
        if y <= lo {
            return 0.0;
        }
        if y >= hi {
            return 1.0;
        }
        if self.e1 == 0.0 {
            return 1.0 - (1.0 - y / self.e2).sqrt();
        }
        (self.integrate_theta(y, |w| self.cdf_kernel(w, y)) / self.normalizer).clamp(0.0, 1.0)
    }

    pub fn density(&self, y: f64) -> f64 {
        let (lo, hi) = self.support();
        if y <= lo || y >= hi {
            return 0.0;
        }
        if self.e1 == 0.0 {
            return 1.0 / (2.0 * self.e2 * (1.0 - y / self.e2).sqrt());
        }
        self.integrate_theta(y, |w| self.density_kernel(w, y)) / self.normalizer
    }

    pub fn bin_probabilities(&self, edges: &[f64]) -> Vec<f64> {
        let cdf: Vec<f64> = edges.iter().map(|&y| self.cdf(y)).collect();
        cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect()
    }
}
