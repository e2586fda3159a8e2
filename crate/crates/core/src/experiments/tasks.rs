//! Replica families. Every experiment draws its randomness through one of
//! these, so any single replica of a finished run can be recomputed from
//! the task description and its index.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Pareto};
use serde::{Deserialize, Serialize};

use super::billiard::{first_collision_sample, low_energy_start, return_trajectory, BilliardPassage, CollisionSample, ReturnTrajectory};
use super::passage::{high_energy_target, passage_time, PassageSample};
use super::see::{SeePassage, SeeStart};
use super::{ExperimentError, RunSettings};
use crate::billiard::CellGeometry;
use crate::chain::{exchange, sample_tail_corrected_initial, EnergyChain, ExchangeDraw, ModelParams, RateMode, SsaSimulator};
use crate::estimators::{FluxLedger, ReferenceSet};
use crate::harness::{run_replicas, RunOutput};

/// Independent replicas indexed by `0..count()`.
pub trait ReplicaTask: Sync {
    type Output: Serialize + Send;

    fn count(&self) -> u64;

    fn replica(&self, index: u64, rng: &mut ChaCha8Rng) -> Result<Self::Output, ExperimentError>;

    fn run(&self, run: &RunSettings) -> Result<RunOutput<Self::Output>, ExperimentError>
    where
        Self: Sized,
    {
        Ok(run_replicas(self.count(), &run.seeds, run.options, |i, rng| self.replica(i, rng))?)
    }
}

/// First cross collisions from conditional Liouville data; replica `i`
/// starts at `points[i / replicas]`.
#[derive(Debug, Clone)]
pub struct CollisionTask<'g> {
    pub geometry: &'g CellGeometry<f64>,
    pub points: Vec<Vec<f64>>,
    pub replicas: u64,
    pub cap: f64,
}

impl<'g> CollisionTask<'g> {
    /// One energy configuration per point of `grid`: `(E1, 1 - E1)`.
    pub fn line(geometry: &'g CellGeometry<f64>, grid: &[f64], replicas: u64, cap: f64) -> Self {
        Self { geometry, points: grid.iter().map(|&e1| vec![e1, 1.0 - e1]).collect(), replicas, cap }
    }
}

impl ReplicaTask for CollisionTask<'_> {
    type Output = CollisionSample;

    fn count(&self) -> u64 {
        self.points.len() as u64 * self.replicas
    }

    fn replica(&self, index: u64, rng: &mut ChaCha8Rng) -> Result<CollisionSample, ExperimentError> {
        Ok(first_collision_sample(self.geometry, &self.points[(index / self.replicas) as usize], self.cap, rng)?)
    }
}

/// SEE passage times into `reference`; replica `i` starts from
/// `starts[i / replicas]`.
#[derive(Debug, Clone)]
pub struct SeePassageTask {
    pub params: ModelParams<f64>,
    pub starts: Vec<SeeStart>,
    pub reference: ReferenceSet,
    pub replicas: u64,
    pub cap: f64,
}

impl ReplicaTask for SeePassageTask {
    type Output = PassageSample;

    fn count(&self) -> u64 {
        self.starts.len() as u64 * self.replicas
    }

    fn replica(&self, index: u64, rng: &mut ChaCha8Rng) -> Result<PassageSample, ExperimentError> {
        let init = self.starts[(index / self.replicas) as usize].sample(&self.params, rng)?;
        let mut p = SeePassage::new(self.params, EnergyChain::new(init.energies)?)?;
        let reference = &self.reference;
        passage_time(&mut p, |e: &[f64]| reference.contains(e), reference.h, self.cap, rng)
    }
}

/// A relaxed SEE state and the same replica a further `t_check` later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReplica {
    pub relaxed: Vec<f64>,
    pub rechecked: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct InvariantTask {
    pub params: ModelParams<f64>,
    pub t_relax: f64,
    pub t_check: f64,
    pub replicas: u64,
}

impl ReplicaTask for InvariantTask {
    type Output = InvariantReplica;

    fn count(&self) -> u64 {
        self.replicas
    }

    fn replica(&self, _: u64, rng: &mut ChaCha8Rng) -> Result<InvariantReplica, ExperimentError> {
        let init = sample_tail_corrected_initial(&self.params, rng);
        let mut sim = SsaSimulator::new(self.params, init, RateMode::Incremental)?;
        sim.run_until(self.t_relax, rng, &mut [])?;
        let relaxed = sim.state().energies.clone();
        sim.run_until(self.t_relax + self.t_check, rng, &mut [])?;
        Ok(InvariantReplica { relaxed, rechecked: sim.state().energies.clone() })
    }
}

/// SEE energies of one replica at each of `times`.
#[derive(Debug, Clone)]
pub struct TrajectoryTask {
    pub params: ModelParams<f64>,
    pub start: SeeStart,
    pub times: Vec<f64>,
    pub replicas: u64,
}

impl ReplicaTask for TrajectoryTask {
    type Output = Vec<Vec<f64>>;

    fn count(&self) -> u64 {
        self.replicas
    }

    fn replica(&self, _: u64, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>, ExperimentError> {
        let init = self.start.sample(&self.params, rng)?;
        let mut sim = SsaSimulator::new(self.params, EnergyChain::new(init.energies)?, RateMode::Incremental)?;
        let mut rows = Vec::with_capacity(self.times.len());
        for &t in &self.times {
            sim.run_until(t, rng, &mut [])?;
            rows.push(sim.state().energies.clone());
        }
        Ok(rows)
    }
}

/// Bond flux ledgers of driven chains; replica `i` runs `params[i / repeats]`
/// from the tail-corrected start.
#[derive(Debug, Clone)]
pub struct ConductivityTask {
    pub params: Vec<ModelParams<f64>>,
    pub repeats: u64,
    pub burn_in: f64,
    pub horizon: f64,
}

impl ReplicaTask for ConductivityTask {
    type Output = FluxLedger;

    fn count(&self) -> u64 {
        self.params.len() as u64 * self.repeats
    }

    fn replica(&self, index: u64, rng: &mut ChaCha8Rng) -> Result<FluxLedger, ExperimentError> {
        let p = &self.params[(index / self.repeats) as usize];
        let init = sample_tail_corrected_initial(p, rng);
        let mut sim = SsaSimulator::new(*p, init, RateMode::Incremental)?;
        let mut ledger = FluxLedger::new(p.n, self.burn_in);
        sim.run_until(self.burn_in + self.horizon, rng, &mut [&mut ledger])?;
        ledger.close(self.burn_in + self.horizon);
        Ok(ledger)
    }
}

/// Independent closed trajectories recording cross-collision gaps.
#[derive(Debug, Clone)]
pub struct ReturnTask<'g> {
    pub geometry: &'g CellGeometry<f64>,
    pub energies: Vec<f64>,
    pub burn_in: usize,
    pub collisions: usize,
    pub cap: f64,
    pub trajectories: u64,
}

impl ReplicaTask for ReturnTask<'_> {
    type Output = ReturnTrajectory;

    fn count(&self) -> u64 {
        self.trajectories
    }

    fn replica(&self, _: u64, rng: &mut ChaCha8Rng) -> Result<ReturnTrajectory, ExperimentError> {
        Ok(return_trajectory(self.geometry, &self.energies, self.burn_in, self.collisions, self.cap, rng)?)
    }
}

/// Billiard passage from a low-energy left cell until every cell holds at
/// least `target`.
#[derive(Debug, Clone)]
pub struct BilliardPassageTask<'g> {
    pub geometry: &'g CellGeometry<f64>,
    pub total: f64,
    pub threshold: f64,
    pub target: f64,
    pub h: f64,
    pub cap: f64,
    pub replicas: u64,
}

impl ReplicaTask for BilliardPassageTask<'_> {
    type Output = PassageSample;

    fn count(&self) -> u64 {
        self.replicas
    }

    fn replica(&self, _: u64, rng: &mut ChaCha8Rng) -> Result<PassageSample, ExperimentError> {
        let s = low_energy_start(self.geometry, self.total, self.threshold, rng)?;
        let mut p = BilliardPassage::new(self.geometry, s)?;
        passage_time(&mut p, high_energy_target(self.target), self.h, self.cap, rng)
    }
}

/// One internal exchange per replica; the output is the left energy after
/// the exchange.
#[derive(Debug, Clone)]
pub struct ExchangeTask {
    pub m: usize,
    pub e1: f64,
    pub e2: f64,
    pub draws: u64,
}

impl ReplicaTask for ExchangeTask {
    type Output = f64;

    fn count(&self) -> u64 {
        self.draws
    }

    fn replica(&self, _: u64, rng: &mut ChaCha8Rng) -> Result<f64, ExperimentError> {
        Ok(exchange(self.e1, self.e2, &ExchangeDraw::sample(self.m, rng)).0)
    }
}

/// Law of a synthetic calibration sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum SyntheticLaw {
    Exponential {
        rate: f64,
    },
    /// `P(X > x) = (scale / x)^shape` for `x >= scale`.
    Pareto {
        scale: f64,
        shape: f64,
    },
}

/// One draw from a known law per replica.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub law: SyntheticLaw,
    pub samples: u64,
}

impl ReplicaTask for SyntheticTask {
    type Output = f64;

    fn count(&self) -> u64 {
        self.samples
    }

    fn replica(&self, _: u64, rng: &mut ChaCha8Rng) -> Result<f64, ExperimentError> {
        let bad = |e: &dyn std::fmt::Display| ExperimentError::Settings(e.to_string());
        Ok(match self.law {
            SyntheticLaw::Exponential { rate } => Exp::new(rate).map_err(|e| bad(&e))?.sample(rng),
            SyntheticLaw::Pareto { scale, shape } => Pareto::new(scale, shape).map_err(|e| bad(&e))?.sample(rng),
        })
    }
}
