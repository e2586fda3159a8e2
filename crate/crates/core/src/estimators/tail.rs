//! Power-law exponents of densities and distribution functions near zero.

use serde::{Deserialize, Serialize};

use super::stats::{weighted_linear_fit, Histogram};
use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailExponent {
    pub exponent: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub bins_used: usize,
    /// Bins were merged because too few were populated.
    pub widened: bool,
    pub window: (f64, f64),
}

const MIN_BIN_COUNT: u64 = 5;

/// Exponent `p` of a density `f(x) ~ x^p` on `[lo, hi]`, from a log-log
/// fit over log-spaced bins weighted by their counts.
///
/// When fewer than half the bins hold at least five samples, the bin count
/// is halved (and `widened` set) until the fit is supported.
pub fn density_tail_exponent(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Result<TailExponent, EstimatorError> {
    if samples.is_empty() {
        return Err(EstimatorError::EmptyInput);
    }
    let mut bins = bins.max(3);
    let mut widened = false;
    loop {
        let h = Histogram::log_spaced(lo, hi, bins, samples)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut ws = Vec::new();
        for ((w, &c), d) in h.edges.windows(2).zip(&h.counts).zip(h.densities()) {
            if c >= MIN_BIN_COUNT {
                xs.push((w[0] * w[1]).sqrt().ln());
                ys.push(d.ln());
                ws.push(c as f64);
            }
        }
        if xs.len() >= 3 && xs.len() * 2 >= bins {
            let fit = weighted_linear_fit(&xs, &ys, &ws)?;
            return Ok(TailExponent {
                exponent: fit.slope,
                stderr: fit.slope_stderr,
                r_squared: fit.r_squared,
                bins_used: xs.len(),
                widened,
                window: (lo, hi),
            });
        }
        if bins <= 3 {
            return Err(EstimatorError::InsufficientSamples {
                needed: 3 * MIN_BIN_COUNT as usize,
                found: h.counts.iter().sum::<u64>() as usize,
            });
        }
        bins = (bins / 2).max(3);
        widened = true;
    }
}

/// Exponent `q` of `P[X < x] ~ x^q` on `[lo, hi]` from a log-log fit of the
/// empirical CDF at `points` geometric grid points.
pub fn cdf_tail_exponent(samples: &[f64], lo: f64, hi: f64, points: usize) -> Result<TailExponent, EstimatorError> {
    if !(lo > 0.0 && hi > lo) {
        return Err(EstimatorError::InvalidInput("need 0 < lo < hi".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let m = points.max(3);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for k in 0..m {
        let x = lo * (hi / lo).powf(k as f64 / (m - 1) as f64);
        let count = sorted.partition_point(|&s| s < x);
        if count as u64 >= MIN_BIN_COUNT {
            let p = count as f64 / n;
            xs.push(x.ln());
            ys.push(p.ln());
            ws.push(n * p / (1.0 - p).max(1.0 / n));
        }
    }
    if xs.len() < 3 {
        return Err(EstimatorError::InsufficientSamples { needed: 3, found: xs.len() });
    }
    let fit = weighted_linear_fit(&xs, &ys, &ws)?;
    Ok(TailExponent {
        exponent: fit.slope,
        stderr: fit.slope_stderr,
        r_squared: fit.r_squared,
        bins_used: xs.len(),
        widened: false,
        window: (lo, hi),
    })
}
