use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::passage::{PassageProcess, PassageSample, StepResult};
use super::table::Table;
use super::tasks::{ConductivityTask, ExchangeTask, InvariantReplica, InvariantTask, ReplicaTask, SeePassageTask, TrajectoryTask};
use super::{ExperimentError, RunSettings};
use crate::chain::{sample_tail_corrected_initial, EnergyChain, ModelParams, RateMode, SsaSimulator, StepOutcome};
use crate::estimators::{
    bond_flux_summary, density_tail_exponent, fit_inverse_length, gamma_sup, mean_stderr, thermal_conductivity, BondFluxSummary,
    EmpiricalCcdf, FluxLedger, GammaEstimate, GammaPolicy, LinearFit, ReferenceSet, TailExponent,
};
use crate::harness::RunOutput;

/// Initial distribution of a SEE replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeeStart {
    /// Every replica starts at the same point.
    Point(Vec<f64>),
    /// Exponential sites with the corrected low-energy tail.
    TailCorrected,
    /// The tail-corrected start evolved for `t_relax` inside the replica.
    Relaxed { t_relax: f64 },
    /// Uniform draw from a precomputed ensemble of states.
    Ensemble(Vec<Vec<f64>>),
}

impl SeeStart {
    pub fn sample(&self, params: &ModelParams<f64>, rng: &mut ChaCha8Rng) -> Result<EnergyChain<f64>, ExperimentError> {
        let chain = match self {
            SeeStart::Point(e) => EnergyChain::new(e.clone())?,
            SeeStart::TailCorrected => sample_tail_corrected_initial(params, rng),
            SeeStart::Relaxed { t_relax } => {
                let init = sample_tail_corrected_initial(params, rng);
                let mut sim = SsaSimulator::new(*params, init, RateMode::Incremental)?;
                sim.run_until(*t_relax, rng, &mut [])?;
                EnergyChain::new(sim.into_state().energies)?
            }
            SeeStart::Ensemble(states) => {
                if states.is_empty() {
                    return Err(ExperimentError::Settings("empty start ensemble".into()));
                }
                EnergyChain::new(states[rng.random_range(0..states.len())].clone())?
            }
        };
        if chain.len() != params.n {
            return Err(ExperimentError::Settings(format!("start has {} sites, chain has {}", chain.len(), params.n)));
        }
        Ok(chain)
    }
}

/// SEE chain observed at every jump.
pub struct SeePassage {
    sim: SsaSimulator<f64>,
}

impl SeePassage {
    pub fn new(params: ModelParams<f64>, initial: EnergyChain<f64>) -> Result<Self, ExperimentError> {
        Ok(Self { sim: SsaSimulator::new(params, initial, RateMode::Incremental)? })
    }
}

impl PassageProcess for SeePassage {
    fn time(&self) -> f64 {
        self.sim.state().time
    }

    fn energies(&self) -> &[f64] {
        &self.sim.state().energies
    }

    fn step_until(&mut self, limit: f64, rng: &mut ChaCha8Rng) -> Result<StepResult, ExperimentError> {
        Ok(match self.sim.step_until(limit, rng)? {
            StepOutcome::Jump(_) => StepResult::Changed,
            StepOutcome::Horizon => StepResult::Reached,
        })
    }

    fn events(&self) -> u64 {
        self.sim.events()
    }
}

/// Passage times into the reference box, one replica per sample.
pub fn see_passage_samples(
    params: &ModelParams<f64>,
    start: &SeeStart,
    reference: &ReferenceSet,
    replicas: u64,
    cap: f64,
    run: &RunSettings,
) -> Result<RunOutput<PassageSample>, ExperimentError> {
    reference.validate()?;
    SeePassageTask { params: *params, starts: vec![start.clone()], reference: *reference, replicas, cap }.run(run)
}

pub(crate) fn passage_ccdf(samples: &[PassageSample], cap: f64) -> Result<EmpiricalCcdf, ExperimentError> {
    let obs: Vec<(f64, bool)> = samples.iter().map(|s| (s.tau, s.censored)).collect();
    Ok(EmpiricalCcdf::from_observations(&obs, Some(cap))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaPoint {
    pub energies: Vec<f64>,
    /// `None` when the tail is too thin to estimate; see `error`.
    pub estimate: Option<GammaEstimate>,
    pub censored_fraction: f64,
    pub error: Option<String>,
}

/// `gamma` at each scanned point; replica `i` belongs to point
/// `i / replicas`.
#[allow(clippy::too_many_arguments)]
pub fn gamma_scan(
    params: &ModelParams<f64>,
    points: &[Vec<f64>],
    reference: &ReferenceSet,
    beta: f64,
    replicas: u64,
    cap: f64,
    policy: &GammaPolicy,
    run: &RunSettings,
) -> Result<(Vec<GammaPoint>, RunOutput<PassageSample>), ExperimentError> {
    reference.validate()?;
    let starts = points.iter().map(|p| SeeStart::Point(p.clone())).collect();
    let out = SeePassageTask { params: *params, starts, reference: *reference, replicas, cap }.run(run)?;
    let mut res = Vec::with_capacity(points.len());
    for (k, p) in points.iter().enumerate() {
        let chunk = &out.results[k * replicas as usize..(k + 1) * replicas as usize];
        let ccdf = passage_ccdf(chunk, cap)?;
        let fit = gamma_sup(&ccdf, beta, reference.h, policy);
        res.push(GammaPoint {
            energies: p.clone(),
            censored_fraction: ccdf.censored_fraction(),
            error: fit.as_ref().err().map(|e| e.to_string()),
            estimate: fit.ok(),
        });
    }
    Ok((res, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantDiagnostics {
    pub replicas: usize,
    pub site_means: Vec<f64>,
    pub site_stderrs: Vec<f64>,
    /// Density exponent of site energies below `0.01`.
    pub low_energy_tail: Option<TailExponent>,
    /// Mean and stderr of the second site (first when `N = 1`) after a
    /// further `t_check` of evolution.
    pub recheck_mean: f64,
    pub recheck_stderr: f64,
    pub t_check: f64,
}

/// Evolves tail-corrected starts for `t_relax` and summarizes the ensemble;
/// each replica continues for `t_check` to test stationarity. The relaxed
/// states are the `relaxed` fields of the returned replicas.
pub fn numerical_invariant(
    params: &ModelParams<f64>,
    t_relax: f64,
    t_check: f64,
    replicas: u64,
    run: &RunSettings,
) -> Result<(InvariantDiagnostics, RunOutput<InvariantReplica>), ExperimentError> {
    let out = InvariantTask { params: *params, t_relax, t_check, replicas }.run(run)?;
    let n = params.n;
    let mut site_means = Vec::with_capacity(n);
    let mut site_stderrs = Vec::with_capacity(n);
    for i in 0..n {
        let col: Vec<f64> = out.results.iter().map(|r| r.relaxed[i]).collect();
        let (m, s) = mean_stderr(&col);
        site_means.push(m);
        site_stderrs.push(s);
    }
    let site = if n > 1 { 1 } else { 0 };
    let col: Vec<f64> = out.results.iter().map(|r| r.rechecked[site]).collect();
    let (recheck_mean, recheck_stderr) = mean_stderr(&col);
    let all: Vec<f64> = out.results.iter().flat_map(|r| r.relaxed.iter().copied()).collect();
    let low_energy_tail = density_tail_exponent(&all, 1e-4, 1e-2, 12).ok();
    let diagnostics = InvariantDiagnostics {
        replicas: out.results.len(),
        site_means,
        site_stderrs,
        low_energy_tail,
        recheck_mean,
        recheck_stderr,
        t_check,
    };
    Ok((diagnostics, out))
}

/// Ensemble means and standard errors of every site at the given times.
/// Columns: `t`, `mean_1..mean_N`, `stderr_1..stderr_N`.
#[allow(clippy::type_complexity)]
pub fn mean_trajectory(
    params: &ModelParams<f64>,
    start: &SeeStart,
    times: &[f64],
    replicas: u64,
    run: &RunSettings,
) -> Result<(Table, RunOutput<Vec<Vec<f64>>>), ExperimentError> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(ExperimentError::Settings("observation times must be nonnegative and sorted".into()));
    }
    let out = TrajectoryTask { params: *params, start: start.clone(), times: times.to_vec(), replicas }.run(run)?;
    let n = params.n;
    let mut headers: Vec<String> = vec!["t".into()];
    headers.extend((1..=n).map(|i| format!("mean_{i}")));
    headers.extend((1..=n).map(|i| format!("stderr_{i}")));
    let refs: Vec<&str> = headers.iter().map(String::as_str).collect();
    let mut table = Table::new(&refs);
    for (k, &t) in times.iter().enumerate() {
        let mut means = Vec::with_capacity(n);
        let mut errs = Vec::with_capacity(n);
        for i in 0..n {
            let col: Vec<f64> = out.results.iter().map(|r| r[k][i]).collect();
            let (m, s) = mean_stderr(&col);
            means.push(m);
            errs.push(s);
        }
        let mut row = vec![t];
        row.extend(means);
        row.extend(errs);
        table.push(row);
    }
    Ok((table, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductivityPoint {
    pub n: usize,
    pub kappa: f64,
    pub stderr: f64,
    pub bonds: BondFluxSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductivitySweep {
    pub points: Vec<ConductivityPoint>,
    /// `kappa(N) = a / N + b`; slope `a`, intercept `b`.
    pub fit: Option<LinearFit>,
}

/// Conductivity for each chain length from `repeats` independent runs,
/// each started from the tail-corrected distribution, discarding
/// `burn_in` and measuring over `horizon`. Replica `i` has length
/// `ns[i / repeats]`.
#[allow(clippy::too_many_arguments)]
pub fn conductivity_sweep(
    m: usize,
    t_left: f64,
    t_right: f64,
    ns: &[usize],
    repeats: u64,
    burn_in: f64,
    horizon: f64,
    run: &RunSettings,
) -> Result<(ConductivitySweep, RunOutput<FluxLedger>), ExperimentError> {
    if !(horizon > 0.0) || !(burn_in >= 0.0) {
        return Err(ExperimentError::Settings("need horizon > 0 and burn_in >= 0".into()));
    }
    let params: Vec<ModelParams<f64>> = ns.iter().map(|&n| ModelParams::new(n, m, t_left, t_right)).collect::<Result<_, _>>()?;
    let task = ConductivityTask { params, repeats, burn_in, horizon };
    let out = task.run(run)?;
    let params = task.params;
    let mut points = Vec::with_capacity(ns.len());
    for (k, p) in params.iter().enumerate() {
        let chunk = &out.results[k * repeats as usize..(k + 1) * repeats as usize];
        let kappas: Vec<f64> = chunk.iter().map(|l| thermal_conductivity(l, p)).collect::<Result<_, _>>()?;
        let (kappa, stderr) = mean_stderr(&kappas);
        points.push(ConductivityPoint { n: p.n, kappa, stderr, bonds: bond_flux_summary(chunk)? });
    }
    let fit = if points.len() >= 3 {
        let ns: Vec<usize> = points.iter().map(|p| p.n).collect();
        let ks: Vec<f64> = points.iter().map(|p| p.kappa).collect();
        Some(fit_inverse_length(&ns, &ks)?)
    } else {
        None
    };
    Ok((ConductivitySweep { points, fit }, out))
}

/// Left energies after `draws` independent internal exchanges from
/// `(e1, e2)`, with the density exponent of their low-energy tail.
#[allow(clippy::too_many_arguments)]
pub fn exchange_cell_tail(
    m: usize,
    e1: f64,
    e2: f64,
    draws: u64,
    window: (f64, f64),
    bins: usize,
    run: &RunSettings,
) -> Result<(TailExponent, RunOutput<f64>), ExperimentError> {
    let out = ExchangeTask { m, e1, e2, draws }.run(run)?;
    let fit = density_tail_exponent(&out.results, window.0, window.1, bins)?;
    Ok((fit, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::ReferenceSet;
    use crate::harness::run_replicas;
    use rand::SeedableRng;

    fn params() -> ModelParams<f64> {
        ModelParams::new(3, 2, 1.0, 2.0).unwrap()
    }

    #[test]
    fn passage_inside_box_is_h() {
        let reference = ReferenceSet::new(0.1, 100.0, 1e-9).unwrap();
        let task =
            SeePassageTask { params: params(), starts: vec![SeeStart::Point(vec![1.0, 1.0, 1.0])], reference, replicas: 1, cap: 1e3 };
        let s = task.replica(0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.tau, 1e-9);
        assert!(!s.censored);
    }

    #[test]
    fn passage_from_outside_waits() {
        let reference = ReferenceSet::new(0.1, 100.0, 0.1).unwrap();
        let run = RunSettings::new(3, 1);
        let out = see_passage_samples(&params(), &SeeStart::Point(vec![0.01, 0.01, 0.01]), &reference, 200, 1e4, &run).unwrap();
        assert!(out.results.iter().all(|s| s.tau >= 0.1 && !s.censored));
        assert!(out.results.iter().any(|s| s.tau > 0.1));
    }

    #[test]
    fn ensemble_start_draws_members() {
        let ens = SeeStart::Ensemble(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let c = ens.sample(&params(), &mut rng).unwrap();
            assert!(c.energies == [1.0, 2.0, 3.0] || c.energies == [4.0, 5.0, 6.0]);
        }
        assert!(SeeStart::Point(vec![1.0]).sample(&params(), &mut rng).is_err());
    }

    #[test]
    fn invariant_means_are_bracketed() {
        let run = RunSettings::new(5, 1);
        let (d, out) = numerical_invariant(&params(), 50.0, 1.0, 2000, &run).unwrap();
        assert_eq!(out.results.len(), 2000);
        for (m, s) in d.site_means.iter().zip(&d.site_stderrs) {
            assert!(*m > 1.0 - 4.0 * s && *m < 2.0 + 4.0 * s, "{d:?}");
        }
        let z = (d.recheck_mean - d.site_means[1]) / (d.recheck_stderr.powi(2) + d.site_stderrs[1].powi(2)).sqrt();
        assert!(z.abs() < 4.0, "{d:?}");
    }

    #[test]
    fn equilibrium_flux_vanishes() {
        let run = RunSettings::new(6, 1);
        let out = run_replicas(10, &run.seeds, run.options, |_, rng| -> Result<FluxLedger, ExperimentError> {
            let p = ModelParams::new(4, 2, 1.5, 1.5).unwrap();
            let mut sim = SsaSimulator::new(p, sample_tail_corrected_initial(&p, rng), RateMode::Incremental)?;
            let mut l = FluxLedger::new(4, 100.0);
            sim.run_until(1100.0, rng, &mut [&mut l])?;
            l.close(1100.0);
            Ok(l)
        })
        .unwrap();
        let s = bond_flux_summary(&out.results).unwrap();
        for (m, e) in s.mean.iter().zip(&s.stderr) {
            assert!(m.abs() < 4.0 * e, "{s:?}");
        }
    }

    #[test]
    fn conductivity_is_positive_and_uniform() {
        let run = RunSettings::new(7, 1);
        let (sweep, _) = conductivity_sweep(2, 1.0, 2.0, &[4, 8, 16], 8, 200.0, 1000.0, &run).unwrap();
        for p in &sweep.points {
            assert!(p.kappa > 0.0);
            assert!(p.bonds.max_pairwise_z < 5.0, "{p:?}");
        }
        assert!(sweep.points[0].kappa > sweep.points[2].kappa);
        assert!(sweep.fit.is_some());
    }

    #[test]
    fn exchange_tail_exponent_m3() {
        let (fit, _) = exchange_cell_tail(3, 0.5, 0.5, 1_000_000, (0.005, 0.1), 12, &RunSettings::new(8, 1)).unwrap();
        assert!((fit.exponent - 2.0).abs() < 0.3, "{fit:?}");
    }
}
