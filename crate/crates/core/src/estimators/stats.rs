use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::EstimatorError;

/// Ordinary or weighted least-squares line `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Weighted coefficient of determination.
    pub r_squared: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    pub points: usize,
}

impl LinearFit {
    /// Abscissa where the line crosses zero.
    pub fn root(&self) -> f64 {
        -self.intercept / self.slope
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit, EstimatorError> {
    weighted_linear_fit(xs, ys, &vec![1.0; xs.len()])
}

pub fn weighted_linear_fit(xs: &[f64], ys: &[f64], ws: &[f64]) -> Result<LinearFit, EstimatorError> {
    if xs.len() != ys.len() || xs.len() != ws.len() {
        return Err(EstimatorError::InvalidInput("fit inputs differ in length".into()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(EstimatorError::InsufficientSamples { needed: 2, found: n });
    }
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
        syy += w * (y - my) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(EstimatorError::InvalidInput("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .zip(ws)
        .map(|((x, y), w)| {
            let r = y - slope * x - intercept;
            w * r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let dof = n.saturating_sub(2).max(1) as f64;
    let sigma2 = ss_res / dof;
    let slope_stderr = (sigma2 / sxx).sqrt();
    let intercept_stderr = (sigma2 * (1.0 / sw + mx * mx / sxx)).sqrt();
    Ok(LinearFit { slope, intercept, r_squared, slope_stderr, intercept_stderr, points: n })
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Bins left after pooling sparse neighbours.
    pub bins: usize,
}

/// Pearson goodness-of-fit test of observed counts against bin
/// probabilities. Adjacent bins are pooled until every expected count is
/// at least 5; `fitted` parameters are subtracted from the degrees of
/// freedom.
pub fn chi_square_test(observed: &[u64], probabilities: &[f64], fitted: usize) -> Result<ChiSquareResult, EstimatorError> {
    if observed.len() != probabilities.len() || observed.is_empty() {
        return Err(EstimatorError::InvalidInput("observed and expected bins differ".into()));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(EstimatorError::InsufficientSamples { needed: 1, found: 0 });
    }
    let total_p: f64 = probabilities.iter().sum();
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probabilities) {
        acc.0 += o as f64;
        acc.1 += p / total_p * n as f64;
        if acc.1 >= 5.0 {
            pooled.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => pooled.push(acc),
        }
    }
    let statistic: f64 = pooled.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = pooled.len().saturating_sub(1 + fitted).max(1);
    let dist = ChiSquared::new(dof as f64).map_err(|e| EstimatorError::InvalidInput(e.to_string()))?;
    Ok(ChiSquareResult { statistic, dof, p_value: 1.0 - dist.cdf(statistic), bins: pooled.len() })
}

/// Histogram over explicit bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Samples that fell outside the edges.
    pub outside: u64,
}

impl Histogram {
    pub fn with_edges(edges: Vec<f64>, samples: &[f64]) -> Result<Self, EstimatorError> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(EstimatorError::InvalidInput("bin edges must increase".into()));
        }
        let mut counts = vec![0u64; edges.len() - 1];
        let mut outside = 0;
        let last = *edges.last().expect("two edges");
        for &x in samples {
            if x < edges[0] || x > last || x.is_nan() {
                outside += 1;
                continue;
            }
            let k = edges.partition_point(|&e| e <= x).saturating_sub(1).min(counts.len() - 1);
            counts[k] += 1;
        }
        Ok(Self { edges, counts, outside })
    }

    pub fn uniform(lo: f64, hi: f64, bins: usize, samples: &[f64]) -> Result<Self, EstimatorError> {
        if bins == 0 || !(hi > lo) {
            return Err(EstimatorError::InvalidInput("need hi > lo and at least one bin".into()));
        }
        let w = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|k| if k == bins { hi } else { lo + w * k as f64 }).collect();
        Self::with_edges(edges, samples)
    }

    pub fn log_spaced(lo: f64, hi: f64, bins: usize, samples: &[f64]) -> Result<Self, EstimatorError> {
        if bins == 0 || !(lo > 0.0) || !(hi > lo) {
            return Err(EstimatorError::InvalidInput("need 0 < lo < hi and at least one bin".into()));
        }
        let r = (hi / lo).ln();
        let edges = (0..=bins).map(|k| if k == bins { hi } else { lo * (r * k as f64 / bins as f64).exp() }).collect();
        Self::with_edges(edges, samples)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.outside
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Density estimate per bin, normalized by all samples including those
    /// outside the edges.
    pub fn densities(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.edges.windows(2).zip(&self.counts).map(|(w, &c)| c as f64 / (n * (w[1] - w[0]))).collect()
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        assert!((f.root() + 0.5).abs() < 1e-14);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn ks_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random()).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!(d < 0.006, "{d}");
        assert!(ks_p_value(d, xs.len()) > 0.001);
        let shifted = ks_statistic(&xs, |x| (x * 1.1).clamp(0.0, 1.0));
        assert!(shifted > 0.05);
        assert!(ks_p_value(shifted, xs.len()) < 1e-10);
    }

    #[test]
    fn chi_square_accepts_truth_and_rejects_wrong_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..50_000).map(|_| rng.random::<f64>().powi(2)).collect();
        let h = Histogram::uniform(0.0, 1.0, 50, &xs).unwrap();
        let truth: Vec<f64> = h.edges.windows(2).map(|w| w[1].sqrt() - w[0].sqrt()).collect();
        let flat = vec![1.0 / 50.0; 50];
        assert!(chi_square_test(&h.counts, &truth, 0).unwrap().p_value > 0.001);
        assert!(chi_square_test(&h.counts, &flat, 0).unwrap().p_value < 1e-10);
    }

    #[test]
    fn histogram_binning() {
        let h = Histogram::uniform(0.0, 1.0, 4, &[0.0, 0.1, 0.25, 0.5, 0.99, 1.0, 1.5, -0.1]).unwrap();
        assert_eq!(h.counts, vec![2, 1, 1, 2]);
        assert_eq!(h.outside, 2);
        let l = Histogram::log_spaced(1e-3, 1.0, 3, &[2e-3, 2e-2, 0.5]).unwrap();
        assert_eq!(l.counts, vec![1, 1, 1]);
        assert!((l.edges[1] - 1e-2).abs() < 1e-15);
    }
}
