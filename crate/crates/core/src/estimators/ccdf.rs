use serde::{Deserialize, Serialize};

use super::EstimatorError;

/// Empirical complementary CDF of a right-censored sample.
///
/// `ccdf(t) = (#{samples > t} + censored) / total`. Censored observations
/// count as mass above every `t`, which makes the curve an upper bound once
/// `t` passes the censoring cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCcdf {
    samples: Vec<f64>,
    censored: usize,
    cap: Option<f64>,
}

impl EmpiricalCcdf {
    /// Builds the CCDF from uncensored samples plus a count of censored ones.
    pub fn new(mut samples: Vec<f64>, censored: usize, cap: Option<f64>) -> Result<Self, EstimatorError> {
        if let Some(bad) = samples.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(EstimatorError::InvalidInput(format!("sample {bad} is not a finite nonnegative number")));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples, censored, cap })
    }

    pub fn from_samples(samples: Vec<f64>) -> Result<Self, EstimatorError> {
        Self::new(samples, 0, None)
    }

    /// Splits `(value, censored)` observations.
    pub fn from_observations(obs: &[(f64, bool)], cap: Option<f64>) -> Result<Self, EstimatorError> {
        let censored = obs.iter().filter(|o| o.1).count();
        let samples = obs.iter().filter(|o| !o.1).map(|o| o.0).collect();
        Self::new(samples, censored, cap)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn censored_count(&self) -> usize {
        self.censored
    }

    pub fn uncensored_count(&self) -> usize {
        self.samples.len()
    }

    pub fn total(&self) -> usize {
        self.samples.len() + self.censored
    }

    pub fn cap(&self) -> Option<f64> {
        self.cap
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.censored as f64 / self.total() as f64
        }
    }

    /// Number of observations strictly above `t`, censored ones included.
    pub fn count_above(&self, t: f64) -> usize {
        let below_or_equal = self.samples.partition_point(|&x| x <= t);
        self.samples.len() - below_or_equal + self.censored
    }

    pub fn ccdf(&self, t: f64) -> f64 {
        if self.total() == 0 {
            return f64::NAN;
        }
        if t < 0.0 {
            return 1.0;
        }
        self.count_above(t) as f64 / self.total() as f64
    }

    /// Binomial standard error of `ccdf(t)`.
    pub fn stderr(&self, t: f64) -> f64 {
        let p = self.ccdf(t);
        (p * (1.0 - p) / self.total() as f64).sqrt()
    }

    /// Empirical quantile of the uncensored part, by the nearest-rank rule.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        let k = ((q.clamp(0.0, 1.0) * self.total() as f64).ceil() as usize).max(1);
        self.samples.get(k - 1).copied()
    }

    pub fn mean_uncensored(&self) -> Option<f64> {
        if self.samples.is_empty() {
            None
        } else {
            Some(self.samples.iter().sum::<f64>() / self.samples.len() as f64)
        }
    }

    /// Points `(t, ccdf, stderr)` on a geometric grid over the sample range.
    pub fn log_grid(&self, points: usize) -> Vec<(f64, f64, f64)> {
        let lo = self.samples.iter().copied().find(|&x| x > 0.0);
        let hi = self.samples.last().copied();
        match (lo, hi) {
            (Some(lo), Some(hi)) if hi > lo && points > 1 => (0..points)
                .map(|k| {
                    let t = lo * (hi / lo).powf(k as f64 / (points - 1) as f64);
                    (t, self.ccdf(t), self.stderr(t))
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Points `(t, ccdf, stderr)` at every distinct sample value.
    pub fn steps(&self) -> Vec<(f64, f64, f64)> {
        let mut out: Vec<(f64, f64, f64)> = Vec::new();
        for &x in &self.samples {
            if out.last().is_none_or(|p| p.0 != x) {
                out.push((x, self.ccdf(x), self.stderr(x)));
            }
        }
        out
    }

    /// Checks monotonicity and range on the step points; used in tests and
    /// debug assertions.
    pub fn is_well_formed(&self) -> bool {
        let pts = self.steps();
        pts.iter().all(|p| (0.0..=1.0).contains(&p.1)) && pts.windows(2).all(|w| w[1].1 <= w[0].1) && self.ccdf(-1e-300) == 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basic_values() {
        let c = EmpiricalCcdf::new(vec![3.0, 1.0, 2.0, 2.0], 1, Some(10.0)).unwrap();
        assert_eq!(c.total(), 5);
        assert_eq!(c.ccdf(-0.1), 1.0);
        assert_eq!(c.ccdf(0.0), 1.0);
        assert_eq!(c.ccdf(1.0), 0.8);
        assert_eq!(c.ccdf(2.0), 0.4);
        assert_eq!(c.ccdf(1e9), 0.2);
        assert_eq!(c.quantile(0.5), Some(2.0));
        assert!(c.is_well_formed());
        assert!(EmpiricalCcdf::from_samples(vec![-1.0]).is_err());
    }

    #[test]
    fn right_continuity() {
        let c = EmpiricalCcdf::from_samples(vec![1.0, 2.0]).unwrap();
        assert_eq!(c.ccdf(1.0), 0.5);
        assert_eq!(c.ccdf(1.0 - 1e-12), 1.0);
    }

    proptest! {
        #[test]
        fn monotone_and_normalized(xs in proptest::collection::vec(0.0f64..100.0, 1..200), cens in 0usize..20) {
            let c = EmpiricalCcdf::new(xs, cens, None).unwrap();
            prop_assert!(c.is_well_formed());
            let grid: Vec<f64> = (0..100).map(|k| k as f64).collect();
            for w in grid.windows(2) {
                prop_assert!(c.ccdf(w[1]) <= c.ccdf(w[0]));
            }
        }
    }
}
