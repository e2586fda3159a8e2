use serde::{Deserialize, Serialize};

use super::ccdf::EmpiricalCcdf;
use super::EstimatorError;

/// The box `[lower, upper]^N` and the passage-time offset `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSet {
    pub lower: f64,
    pub upper: f64,
    pub h: f64,
}

impl Default for ReferenceSet {
    fn default() -> Self {
        Self { lower: 0.1, upper: 100.0, h: 0.1 }
    }
}

impl ReferenceSet {
    pub fn new(lower: f64, upper: f64, h: f64) -> Result<Self, EstimatorError> {
        let set = Self { lower, upper, h };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        if !(self.lower > 0.0 && self.upper > self.lower && self.upper.is_finite()) {
            return Err(EstimatorError::InvalidInput(format!(
                "reference box needs 0 < lower < upper, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(EstimatorError::InvalidInput(format!("offset h must be positive, got {}", self.h)));
        }
        Ok(())
    }

    pub fn contains(&self, energies: &[f64]) -> bool {
        energies.iter().all(|&e| e >= self.lower && e <= self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaPolicy {
    /// Grid points must have at least this many observations above them.
    pub min_count: usize,
    pub grid_points: usize,
}

impl Default for GammaPolicy {
    fn default() -> Self {
        Self { min_count: 1000, grid_points: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub gamma: f64,
    pub t_at_sup: f64,
    pub grid_top: f64,
    /// Censored mass lies above the grid, so the supremum may be larger.
    pub lower_bound: bool,
}

/// `sup ccdf(t) t^beta` over a geometric grid from `t_min` to the largest
/// `t` with `min_count` observations above it.
pub fn gamma_sup(ccdf: &EmpiricalCcdf, beta: f64, t_min: f64, policy: &GammaPolicy) -> Result<GammaEstimate, EstimatorError> {
    if !(beta > 0.0) || !(t_min > 0.0) {
        return Err(EstimatorError::InvalidInput("need beta > 0 and t_min > 0".into()));
    }
    let xs = ccdf.samples();
    let k = ccdf.total().saturating_sub(policy.min_count).min(xs.len());
    let top = (0..k)
        .rev()
        .map(|i| xs[i])
        .find(|&t| ccdf.count_above(t) >= policy.min_count)
        .map(|t| ccdf.cap().map_or(t, |c| t.min(c)))
        .filter(|&t| t > t_min)
        .ok_or_else(|| EstimatorError::FitWindow(format!("no grid point above t_min = {t_min} has enough samples")))?;
    let m = policy.grid_points.max(2);
    let mut best = GammaEstimate { gamma: 0.0, t_at_sup: t_min, grid_top: top, lower_bound: ccdf.censored_count() > 0 };
    for i in 0..m {
        let t = t_min * (top / t_min).powf(i as f64 / (m - 1) as f64);
        let g = ccdf.ccdf(t) * t.powf(beta);
        if g > best.gamma {
            best.gamma = g;
            best.t_at_sup = t;
        }
    }
    Ok(best)
}
