use serde::{Deserialize, Serialize};

use super::ccdf::EmpiricalCcdf;
use super::stats::weighted_linear_fit;
use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// `log ccdf` against `t`: exponential tails.
    LogLinear,
    /// `log ccdf` against `log t`: polynomial tails.
    LogLog,
}

/// How the fit window is chosen.
///
/// By default the window starts at the `start_quantile` of the samples and
/// ends at the largest `t` that still has `min_count` observations above
/// it (and never beyond the censoring cap). Log-log fits also need
/// `min_decades` of span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowPolicy {
    pub start_quantile: f64,
    pub min_count: usize,
    pub min_decades: f64,
    pub min_uncensored: usize,
    pub grid_points: usize,
    /// Explicit `(t_lo, t_hi)`; `t_hi` is still clipped by `min_count`.
    pub window: Option<(f64, f64)>,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self { start_quantile: 0.1, min_count: 100, min_decades: 1.0, min_uncensored: 1000, grid_points: 200, window: None }
    }
}

impl WindowPolicy {
    pub fn with_window(mut self, lo: f64, hi: f64) -> Self {
        self.window = Some((lo, hi));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub scale: Scale,
    pub stderr: f64,
    pub points: usize,
}

impl TailFit {
    /// Decay rate of a log-linear fit.
    pub fn rate(&self) -> f64 {
        -self.slope
    }

    /// Tail exponent `beta` of a log-log fit.
    pub fn exponent(&self) -> f64 {
        -self.slope
    }
}

/// Largest sample value with at least `min_count` observations above it.
fn upper_limit(ccdf: &EmpiricalCcdf, min_count: usize) -> Option<f64> {
    let xs = ccdf.samples();
    let k = ccdf.total().checked_sub(min_count)?.min(xs.len());
    (0..k).rev().map(|i| xs[i]).find(|&t| ccdf.count_above(t) >= min_count)
}

pub fn fit_window(ccdf: &EmpiricalCcdf, policy: &WindowPolicy, scale: Scale) -> Result<(f64, f64), EstimatorError> {
    if ccdf.uncensored_count() < policy.min_uncensored {
        return Err(EstimatorError::InsufficientSamples { needed: policy.min_uncensored, found: ccdf.uncensored_count() });
    }
    let hi_count =
        upper_limit(ccdf, policy.min_count).ok_or_else(|| EstimatorError::FitWindow("no point has enough samples above it".into()))?;
    let (lo, mut hi) = match policy.window {
        Some((lo, hi)) => (lo, hi.min(hi_count)),
        None => {
            let lo = ccdf.quantile(policy.start_quantile).ok_or_else(|| EstimatorError::FitWindow("start quantile is censored".into()))?;
            (lo, hi_count)
        }
    };
    if let Some(cap) = ccdf.cap() {
        hi = hi.min(cap);
    }
    if !(hi > lo) {
        return Err(EstimatorError::FitWindow(format!("empty window [{lo}, {hi}]")));
    }
    if scale == Scale::LogLog {
        if !(lo > 0.0) {
            return Err(EstimatorError::FitWindow("log-log window must start above zero".into()));
        }
        if (hi / lo).log10() < policy.min_decades {
            return Err(EstimatorError::FitWindow(format!("window [{lo:.4e}, {hi:.4e}] spans less than {} decade(s)", policy.min_decades)));
        }
    }
    Ok((lo, hi))
}

/// Weighted least-squares fit of `log ccdf` over the policy window.
///
/// The curve is sampled at `grid_points` points (equally spaced in `t` or in
/// `log t`), each weighted by the inverse delta-method variance of
/// `log ccdf`, `n p / (1 - p)`.
pub fn fit_tail(ccdf: &EmpiricalCcdf, policy: &WindowPolicy, scale: Scale) -> Result<TailFit, EstimatorError> {
    let (lo, hi) = fit_window(ccdf, policy, scale)?;
    let m = policy.grid_points.max(3);
    let n = ccdf.total() as f64;
    let mut xs = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    let mut ws = Vec::with_capacity(m);
    for k in 0..m {
        let f = k as f64 / (m - 1) as f64;
        let t = match scale {
            Scale::LogLinear => lo + (hi - lo) * f,
            Scale::LogLog => lo * (hi / lo).powf(f),
        };
        let p = ccdf.ccdf(t).min(1.0 - 0.5 / n);
        if p <= 0.0 {
            continue;
        }
        xs.push(match scale {
            Scale::LogLinear => t,
            Scale::LogLog => t.ln(),
        });
        ys.push(p.ln());
        ws.push(n * p / (1.0 - p));
    }
    let line = weighted_linear_fit(&xs, &ys, &ws)?;
    Ok(TailFit {
        slope: line.slope,
        intercept: line.intercept,
        window: (lo, hi),
        r_squared: line.r_squared.clamp(0.0, 1.0),
        scale,
        stderr: line.slope_stderr,
        points: xs.len(),
    })
}

pub fn fit_exponential_tail(ccdf: &EmpiricalCcdf, policy: &WindowPolicy) -> Result<TailFit, EstimatorError> {
    fit_tail(ccdf, policy, Scale::LogLinear)
}

pub fn fit_polynomial_tail(ccdf: &EmpiricalCcdf, policy: &WindowPolicy) -> Result<TailFit, EstimatorError> {
    fit_tail(ccdf, policy, Scale::LogLog)
}

/// Log-log fit over `[t_hi / 10, t_hi]`, where `t_hi` is the largest `t`
/// with `policy.min_count` observations above it.
pub fn fit_last_decade(ccdf: &EmpiricalCcdf, policy: &WindowPolicy) -> Result<TailFit, EstimatorError> {
    let probe = WindowPolicy { min_decades: 0.0, window: None, ..*policy };
    let (_, hi) = fit_window(ccdf, &probe, Scale::LogLog)?;
    fit_polynomial_tail(ccdf, &WindowPolicy { min_decades: 1.0, ..*policy }.with_window(hi / 10.0, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp};

    fn exp_samples(rate: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Exp::new(rate).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn pareto_samples(beta: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / beta)).collect()
    }

    #[test]
    fn exponential_rate_recovered() {
        let c = EmpiricalCcdf::from_samples(exp_samples(2.0, 100_000, 1)).unwrap();
        let fit = fit_exponential_tail(&c, &WindowPolicy::default()).unwrap();
        assert!((fit.rate() - 2.0).abs() < 0.05, "{fit:?}");
        assert!(fit.r_squared >= 0.999);
    }

    #[test]
    fn last_decade_fit_spans_one_decade() {
        let c = EmpiricalCcdf::from_samples(pareto_samples(2.0, 50_000, 7)).unwrap();
        let fit = fit_last_decade(&c, &WindowPolicy::default()).unwrap();
        assert!((fit.window.1 / fit.window.0 - 10.0).abs() < 1e-9);
        assert!(c.count_above(fit.window.1) >= 100);
        assert!((fit.exponent() - 2.0).abs() < 0.2, "{fit:?}");
    }

    #[test]
    fn pareto_exponent_recovered() {
        let c = EmpiricalCcdf::from_samples(pareto_samples(3.0, 100_000, 2)).unwrap();
        // A decade of span needs the whole sample and a thinner top.
        assert!(fit_polynomial_tail(&c, &WindowPolicy::default()).is_err());
        let policy = WindowPolicy { start_quantile: 0.0, min_count: 50, ..WindowPolicy::default() };
        let fit = fit_polynomial_tail(&c, &policy).unwrap();
        assert!((fit.exponent() - 3.0).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn exponential_is_not_a_power_law() {
        let c = EmpiricalCcdf::from_samples(exp_samples(1.0, 100_000, 3)).unwrap();
        let fit = fit_polynomial_tail(&c, &WindowPolicy::default()).unwrap();
        assert!(fit.r_squared < 0.98, "{fit:?}");
    }

    #[test]
    fn degenerate_samples_fail() {
        let c = EmpiricalCcdf::from_samples(vec![1.0; 5000]).unwrap();
        assert!(matches!(fit_exponential_tail(&c, &WindowPolicy::default()), Err(EstimatorError::FitWindow(_))));
        let few = EmpiricalCcdf::from_samples(exp_samples(1.0, 500, 4)).unwrap();
        assert!(matches!(fit_exponential_tail(&few, &WindowPolicy::default()), Err(EstimatorError::InsufficientSamples { .. })));
    }

    #[test]
    fn window_respects_min_count_and_cap() {
        let mut xs = exp_samples(1.0, 20_000, 5);
        let cap = 3.0;
        let censored = xs.iter().filter(|&&x| x > cap).count();
        xs.retain(|&x| x <= cap);
        let c = EmpiricalCcdf::new(xs, censored, Some(cap)).unwrap();
        let (lo, hi) = fit_window(&c, &WindowPolicy::default(), Scale::LogLinear).unwrap();
        assert!(hi <= cap && lo > 0.0);
        assert!(c.count_above(hi) >= 100);
        let fit = fit_exponential_tail(&c, &WindowPolicy::default()).unwrap();
        assert!((fit.rate() - 1.0).abs() < 0.05);
    }

    #[test]
    fn fits_are_deterministic() {
        let c = EmpiricalCcdf::from_samples(exp_samples(2.0, 10_000, 6)).unwrap();
        let a = fit_exponential_tail(&c, &WindowPolicy::default()).unwrap();
        let b = fit_exponential_tail(&c.clone(), &WindowPolicy::default()).unwrap();
        assert_eq!(a.slope.to_bits(), b.slope.to_bits());
        assert_eq!(a.r_squared.to_bits(), b.r_squared.to_bits());
    }
}
