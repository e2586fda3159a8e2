use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::passage::{PassageProcess, StepResult};
use super::tasks::{CollisionTask, ReplicaTask};
use super::{ExperimentError, RunSettings};
use crate::billiard::{sample_conditional_liouville, BilliardError, BilliardSim, BilliardState, CellGeometry, EventKind};
use crate::estimators::{
    chi_square_test, density_tail_exponent, fit_exponential_tail, ks_statistic, linear_fit, mean_stderr, ChiSquareResult, EmpiricalCcdf,
    EstimatorError, Histogram, LinearFit, PostCollisionOracle, ReturnSample, TailExponent, WindowPolicy,
};
use crate::harness::RunOutput;

/// The first cross-cell collision from conditional Liouville data.
///
/// `disk_*` are the energies of the colliding disk in the lower-index cell,
/// `left_*` the total energy of that cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionSample {
    pub tau: f64,
    pub censored: bool,
    pub left_pre: f64,
    pub left_post: f64,
    pub disk_pre: f64,
    pub disk_post: f64,
    pub events: u64,
}

pub fn first_collision_sample(
    geometry: &CellGeometry<f64>,
    energies: &[f64],
    cap: f64,
    rng: &mut ChaCha8Rng,
) -> Result<CollisionSample, BilliardError> {
    let state = sample_conditional_liouville(geometry, energies, rng)?;
    let left_pre = state.cell_energy(0);
    let mut sim = BilliardSim::new(geometry, state)?;
    let c = sim.first_cross_collision(cap)?;
    let (disk_pre, disk_post) = if c.censored { (0.0, 0.0) } else { (c.pre[0], c.post[0]) };
    Ok(CollisionSample {
        tau: c.elapsed,
        censored: c.censored,
        left_pre,
        left_post: left_pre - disk_pre + disk_post,
        disk_pre,
        disk_post,
        events: sim.event_count(),
    })
}

pub fn collision_samples(
    geometry: &CellGeometry<f64>,
    energies: &[f64],
    replicas: u64,
    cap: f64,
    run: &RunSettings,
) -> Result<RunOutput<CollisionSample>, ExperimentError> {
    CollisionTask { geometry, points: vec![energies.to_vec()], replicas, cap }.run(run)
}

pub fn collision_ccdf(samples: &[CollisionSample], cap: f64) -> Result<EmpiricalCcdf, EstimatorError> {
    let obs: Vec<(f64, bool)> = samples.iter().map(|s| (s.tau, s.censored)).collect();
    EmpiricalCcdf::from_observations(&obs, Some(cap))
}

/// Fitted exponential rate at `(E1, 1 - E1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub e1: f64,
    pub rate: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub censored_fraction: f64,
    pub samples: usize,
    pub mean_tau: f64,
    pub error: Option<String>,
}

/// Runs `replicas` first-collision samples at each `(E1, 1 - E1)` and fits
/// the exponential tail. Replica `i` belongs to grid point `i / replicas`.
pub fn rate_surface(
    geometry: &CellGeometry<f64>,
    grid: &[f64],
    replicas: u64,
    cap: f64,
    policy: &WindowPolicy,
    run: &RunSettings,
) -> Result<(Vec<RatePoint>, RunOutput<CollisionSample>), ExperimentError> {
    if grid.iter().any(|&e| !(0.0..=1.0).contains(&e)) {
        return Err(ExperimentError::Settings("grid energies must lie in [0, 1]".into()));
    }
    let out = CollisionTask::line(geometry, grid, replicas, cap).run(run)?;
    let mut points = Vec::with_capacity(grid.len());
    for (k, &e1) in grid.iter().enumerate() {
        let chunk = &out.results[k * replicas as usize..(k + 1) * replicas as usize];
        let ccdf = collision_ccdf(chunk, cap)?;
        let mean_tau = ccdf.mean_uncensored().unwrap_or(f64::NAN);
        let mut p = RatePoint {
            e1,
            rate: f64::NAN,
            stderr: f64::NAN,
            r_squared: f64::NAN,
            censored_fraction: ccdf.censored_fraction(),
            samples: chunk.len(),
            mean_tau,
            error: None,
        };
        match fit_exponential_tail(&ccdf, policy) {
            Ok(fit) => {
                p.rate = fit.rate();
                p.stderr = fit.stderr;
                p.r_squared = fit.r_squared;
            }
            Err(e) => p.error = Some(e.to_string()),
        }
        points.push(p);
    }
    Ok((points, out))
}

/// Log-log fit of rate against `E1` over `lo <= E1 <= hi`.
pub fn rate_law_slope(points: &[RatePoint], lo: f64, hi: f64) -> Result<LinearFit, EstimatorError> {
    let sel: Vec<&RatePoint> = points.iter().filter(|p| p.e1 >= lo && p.e1 <= hi && p.rate > 0.0).collect();
    let xs: Vec<f64> = sel.iter().map(|p| p.e1.ln()).collect();
    let ys: Vec<f64> = sel.iter().map(|p| p.rate.ln()).collect();
    linear_fit(&xs, &ys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostCollisionTest {
    pub chi_square: ChiSquareResult,
    pub ks: f64,
    pub histogram: Histogram,
    pub expected: Vec<f64>,
}

/// Histogram of the colliding disk's post-collision energy against the
/// angular oracle.
pub fn post_collision_test(samples: &[CollisionSample], e1: f64, e2: f64, bins: usize) -> Result<PostCollisionTest, EstimatorError> {
    let ys: Vec<f64> = samples.iter().filter(|s| !s.censored).map(|s| s.disk_post).collect();
    let oracle = PostCollisionOracle::new(e1, e2)?;
    let histogram = Histogram::uniform(0.0, e1 + e2, bins, &ys)?;
    let expected = oracle.bin_probabilities(&histogram.edges);
    let chi_square = chi_square_test(&histogram.counts, &expected, 0)?;
    let ks = ks_statistic(&ys, |y| oracle.cdf(y));
    Ok(PostCollisionTest { chi_square, ks, histogram, expected })
}

/// Energy fraction of the colliding disk in its cell, before the collision.
pub fn participation_fractions(samples: &[CollisionSample]) -> Vec<f64> {
    samples.iter().filter(|s| !s.censored && s.left_pre > 0.0).map(|s| (s.disk_pre / s.left_pre).clamp(0.0, 1.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationFit {
    /// Maximum-likelihood `c` with the exponent fixed at `M - 2`.
    pub coefficient: f64,
    /// Joint maximum-likelihood `(c, k)`.
    pub joint_coefficient: f64,
    pub joint_exponent: f64,
    /// Curvature-based standard error of the joint exponent.
    pub joint_exponent_stderr: f64,
    /// Density exponent of `1 - x` near zero from log-spaced bins.
    pub local: Option<TailExponent>,
    /// Histogram against the density with the refit `c`.
    pub chi_square: ChiSquareResult,
    pub samples: usize,
}

struct LikelihoodData {
    sqrt_x: Vec<f64>,
    sum_log_1mx: f64,
}

impl LikelihoodData {
    fn new(xs: &[f64]) -> Self {
        Self { sqrt_x: xs.iter().map(|x| x.sqrt()).collect(), sum_log_1mx: xs.iter().map(|x| (1.0 - x).max(1e-300).ln()).sum() }
    }

    fn log_likelihood(&self, c: f64, k: f64) -> f64 {
        let norm = 1.0 / (k + 1.0) + c * statrs::function::beta::beta(1.5, k + 1.0);
        let n = self.sqrt_x.len() as f64;
        self.sqrt_x.iter().map(|s| (1.0 + c * s).ln()).sum::<f64>() + k * self.sum_log_1mx - n * norm.ln()
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Refits the corrected participation density to observed fractions.
pub fn fit_participation(xs: &[f64], m: usize, bins: usize) -> Result<ParticipationFit, EstimatorError> {
    if m < 2 {
        return Err(EstimatorError::NotApplicable("participation fit needs M >= 2".into()));
    }
    if xs.len() < 100 {
        return Err(EstimatorError::InsufficientSamples { needed: 100, found: xs.len() });
    }
    let data = LikelihoodData::new(xs);
    let k0 = (m - 2) as f64;
    let (c_lo, c_hi) = (-0.999, 50.0);
    let coefficient = golden_max(|c| data.log_likelihood(c, k0), c_lo, c_hi);
    let profile = |k: f64| {
        let c = golden_max(|c| data.log_likelihood(c, k), c_lo, c_hi);
        (c, data.log_likelihood(c, k))
    };
    let joint_exponent = golden_max(|k| profile(k).1, -0.9, k0 + 4.0);
    let joint_coefficient = profile(joint_exponent).0;
    let dk = 0.02;
    let curv = (profile(joint_exponent + dk).1 - 2.0 * profile(joint_exponent).1 + profile(joint_exponent - dk).1) / (dk * dk);
    let joint_exponent_stderr = if curv < 0.0 { (-1.0 / curv).sqrt() } else { f64::NAN };
    let ys: Vec<f64> = xs.iter().map(|x| 1.0 - x).collect();
    let local = density_tail_exponent(&ys, 0.01, 0.5, 12).ok();
    let density = crate::estimators::ParticipationDensity::with_exponent(coefficient, k0)?;
    let histogram = Histogram::uniform(0.0, 1.0, bins, xs)?;
    let expected = density.bin_probabilities(&histogram.edges);
    let chi_square = chi_square_test(&histogram.counts, &expected, 1)?;
    Ok(ParticipationFit { coefficient, joint_coefficient, joint_exponent, joint_exponent_stderr, local, chi_square, samples: xs.len() })
}

/// Density exponent of the post-collision energy of the lower-index cell
/// near zero.
pub fn cell_energy_tail(samples: &[CollisionSample], lo: f64, hi: f64, bins: usize) -> Result<TailExponent, EstimatorError> {
    let xs: Vec<f64> = samples.iter().filter(|s| !s.censored).map(|s| s.left_post).collect();
    density_tail_exponent(&xs, lo, hi, bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxPoint {
    pub e1: f64,
    /// Mean energy gained by the lower-index cell at the first collision.
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub censored: usize,
}

/// Mean first-collision energy transfer into the left cell over a grid of
/// `(E1, 1 - E1)`. Censored replicas are excluded from the mean and counted.
pub fn flux_curve(
    geometry: &CellGeometry<f64>,
    grid: &[f64],
    replicas: u64,
    cap: f64,
    run: &RunSettings,
) -> Result<(Vec<FluxPoint>, RunOutput<CollisionSample>), ExperimentError> {
    let out = CollisionTask::line(geometry, grid, replicas, cap).run(run)?;
    let points = grid
        .iter()
        .enumerate()
        .map(|(k, &e1)| {
            let chunk = &out.results[k * replicas as usize..(k + 1) * replicas as usize];
            let d: Vec<f64> = chunk.iter().filter(|s| !s.censored).map(|s| s.left_post - s.left_pre).collect();
            let (mean, stderr) = mean_stderr(&d);
            FluxPoint { e1, mean, stderr, samples: d.len(), censored: chunk.len() - d.len() }
        })
        .collect();
    Ok((points, out))
}

/// Cross-collision return times along one closed trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnTrajectory {
    pub samples: Vec<ReturnSample>,
    pub events: u64,
    /// The trajectory stopped because a gap exceeded the cap.
    pub censored: bool,
}

/// Runs a closed two-cell system from conditional Liouville data, skips
/// `burn_in` cross collisions, then records `collisions` gaps together with
/// the cell energies that held during each gap.
pub fn return_trajectory(
    geometry: &CellGeometry<f64>,
    energies: &[f64],
    burn_in: usize,
    collisions: usize,
    cap: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ReturnTrajectory, BilliardError> {
    let state = sample_conditional_liouville(geometry, energies, rng)?;
    let mut sim = BilliardSim::new(geometry, state)?;
    let cells = geometry.cell_count();
    for _ in 0..burn_in {
        if sim.first_cross_collision(cap)?.censored {
            return Ok(ReturnTrajectory { samples: Vec::new(), events: sim.event_count(), censored: true });
        }
    }
    let mut samples = Vec::with_capacity(collisions);
    let mut censored = false;
    for _ in 0..collisions {
        let e = sim.state().cell_energies(cells);
        let c = sim.first_cross_collision(cap)?;
        if c.censored {
            censored = true;
            break;
        }
        samples.push(ReturnSample { e1: e[0], e2: e[1], dt: c.elapsed });
    }
    Ok(ReturnTrajectory { samples, events: sim.event_count(), censored })
}

/// Conditional Liouville state with total energy `total`, conditioned on
/// the left cell holding less than `threshold`.
///
/// The left share of the energy has law Beta(M, M) under the Liouville
/// measure on the common energy shell; it is drawn from the proposal
/// `(threshold / total) u^(1/M)` and accepted with probability
/// `(1 - x)^(M - 1)`.
pub fn low_energy_start(
    geometry: &CellGeometry<f64>,
    total: f64,
    threshold: f64,
    rng: &mut ChaCha8Rng,
) -> Result<BilliardState<f64>, BilliardError> {
    let m = geometry.disks_per_cell;
    let top = (threshold / total).min(1.0);
    let x = loop {
        let u: f64 = rng.random();
        let x = top * u.powf(1.0 / m as f64);
        let accept: f64 = rng.random();
        if accept < (1.0 - x).powi(m as i32 - 1) {
            break x;
        }
    };
    sample_conditional_liouville(geometry, &[x * total, (1.0 - x) * total], rng)
}

/// Billiard cell energies observed at cross collisions.
pub struct BilliardPassage<'g> {
    sim: BilliardSim<'g, f64>,
    energies: Vec<f64>,
}

impl<'g> BilliardPassage<'g> {
    pub fn new(geometry: &'g CellGeometry<f64>, state: BilliardState<f64>) -> Result<Self, BilliardError> {
        let energies = state.cell_energies(geometry.cell_count());
        Ok(Self { sim: BilliardSim::new(geometry, state)?, energies })
    }
}

impl PassageProcess for BilliardPassage<'_> {
    fn time(&self) -> f64 {
        self.sim.time()
    }

    fn energies(&self) -> &[f64] {
        &self.energies
    }

    fn step_until(&mut self, limit: f64, _rng: &mut ChaCha8Rng) -> Result<StepResult, ExperimentError> {
        loop {
            match self.sim.next_event_time() {
                Some(t) if t <= limit => {
                    let ev = self.sim.advance()?;
                    if let EventKind::CrossDisk { .. } = ev.kind {
                        self.energies = self.sim.state().cell_energies(self.energies.len());
                        return Ok(StepResult::Changed);
                    }
                }
                _ => {
                    self.sim.drift_until(limit)?;
                    return Ok(StepResult::Reached);
                }
            }
        }
    }

    fn events(&self) -> u64 {
        self.sim.event_count()
    }
}
