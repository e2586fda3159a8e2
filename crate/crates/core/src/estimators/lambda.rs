use serde::{Deserialize, Serialize};

use super::ccdf::EmpiricalCcdf;
use super::EstimatorError;

/// Fitted collision rates `R(E1, 1 - E1)` on a grid of `E1 <= 1/2`,
/// extended to any pair by symmetry and the square-root homogeneity
/// `R(aE1, aE2) = sqrt(a) R(E1, E2)`.
///
/// Between knots the rate is linear in `log E1`; knot values are first made
/// nondecreasing by pooling adjacent violators. Below the grid the rate
/// follows `sqrt(E1)`, above it the rate is held constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSurface {
    knots: Vec<(f64, f64)>,
}

fn pool_adjacent_violators(ys: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &y in ys {
        blocks.push((y, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.pop();
            let merged = ((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb);
            *blocks.last_mut().expect("two blocks") = merged;
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat_n(v, n)).collect()
}

impl RateSurface {
    pub fn new(points: &[(f64, f64)]) -> Result<Self, EstimatorError> {
        let mut pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 > 0.0 && p.0 <= 0.5).collect();
        if pts.len() < 2 {
            return Err(EstimatorError::InsufficientSamples { needed: 2, found: pts.len() });
        }
        if pts.iter().any(|p| !(p.1 > 0.0) || !p.1.is_finite()) {
            return Err(EstimatorError::InvalidInput("rates must be positive and finite".into()));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let iso = pool_adjacent_violators(&ys);
        let knots = pts.iter().zip(iso).map(|(p, y)| (p.0, y)).collect();
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Rate at total energy 1 with smaller share `x`.
    fn unit_rate(&self, x: f64) -> f64 {
        let first = self.knots[0];
        let last = *self.knots.last().expect("two knots");
        if x <= first.0 {
            return first.1 * (x / first.0).max(0.0).sqrt();
        }
        if x >= last.0 {
            return last.1;
        }
        let k = self.knots.partition_point(|p| p.0 <= x);
        let (x0, y0) = self.knots[k - 1];
        let (x1, y1) = self.knots[k];
        let f = (x / x0).ln() / (x1 / x0).ln();
        y0 + (y1 - y0) * f
    }

    pub fn rate(&self, e1: f64, e2: f64) -> f64 {
        let total = e1 + e2;
        if !(total > 0.0) {
            return 0.0;
        }
        self.unit_rate(e1.min(e2) / total) * total.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateFunction {
    /// `scale * sqrt(min(E1, E2))`.
    SqrtMin {
        scale: f64,
    },
    Surface {
        surface: RateSurface,
        scale: f64,
    },
}

impl RateFunction {
    pub fn sqrt_min() -> Self {
        Self::SqrtMin { scale: 1.0 }
    }

    pub fn surface(surface: RateSurface) -> Self {
        Self::Surface { surface, scale: 1.0 }
    }

    pub fn rate(&self, e1: f64, e2: f64) -> f64 {
        match self {
            Self::SqrtMin { scale } => scale * e1.min(e2).max(0.0).sqrt(),
            Self::Surface { surface, scale } => scale * surface.rate(e1, e2),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self.clone() {
            Self::SqrtMin { scale } => Self::SqrtMin { scale: scale * factor },
            Self::Surface { surface, scale } => Self::Surface { surface, scale: scale * factor },
        }
    }
}

/// Cell energies at one cross collision and the time to the next one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnSample {
    pub e1: f64,
    pub e2: f64,
    pub dt: f64,
}

/// Empirical CCDF of the rescaled return times `dt * R(E1, E2)`.
pub fn lambda_rescaled(trajectory: &[ReturnSample], rate: &RateFunction) -> Result<EmpiricalCcdf, EstimatorError> {
    if trajectory.is_empty() {
        return Err(EstimatorError::EmptyInput);
    }
    EmpiricalCcdf::from_samples(trajectory.iter().map(|s| s.dt * rate.rate(s.e1, s.e2)).collect())
}

/// Worst deviation of `log L(t)` from `-t` on a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaCheck {
    pub sup_abs_deviation: f64,
    /// Largest deviation in units of the binomial standard error of `log L`.
    pub max_stderr_ratio: f64,
    pub worst_t: f64,
    pub t_max: f64,
}

impl LambdaCheck {
    pub fn within(&self, stderrs: f64) -> bool {
        self.max_stderr_ratio <= stderrs
    }
}

pub fn compare_with_exponential(ccdf: &EmpiricalCcdf, t_max: f64, points: usize) -> LambdaCheck {
    let n = ccdf.total() as f64;
    let mut out = LambdaCheck { sup_abs_deviation: 0.0, max_stderr_ratio: 0.0, worst_t: 0.0, t_max };
    for k in 0..points.max(2) {
        let t = t_max * k as f64 / (points.max(2) - 1) as f64;
        let p = ccdf.ccdf(t);
        let (dev, ratio) = if p > 0.0 {
            let dev = (p.ln() + t).abs();
            let q = (-t).exp();
            let se = ((1.0 - q) / (n * q)).sqrt();
            (
                dev,
                if se > 0.0 {
                    dev / se
                } else if dev > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                },
            )
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        out.sup_abs_deviation = out.sup_abs_deviation.max(dev);
        if ratio > out.max_stderr_ratio {
            out.max_stderr_ratio = ratio;
            out.worst_t = t;
        }
    }
    out
}
