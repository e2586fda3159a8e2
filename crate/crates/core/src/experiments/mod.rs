//! Replica tasks and sweeps behind each reproduced figure.

mod billiard;
mod passage;
mod see;
mod table;
mod tasks;

pub use billiard::{
    cell_energy_tail, collision_ccdf, collision_samples, first_collision_sample, fit_participation, flux_curve, low_energy_start,
    participation_fractions, post_collision_test, rate_law_slope, rate_surface, return_trajectory, BilliardPassage, CollisionSample,
    FluxPoint, ParticipationFit, PostCollisionTest, RatePoint, ReturnTrajectory,
};
pub use passage::{high_energy_target, passage_time, PassageProcess, PassageSample, StepResult};
pub use see::{
    conductivity_sweep, exchange_cell_tail, gamma_scan, mean_trajectory, numerical_invariant, see_passage_samples, ConductivityPoint,
    ConductivitySweep, GammaPoint, InvariantDiagnostics, SeePassage, SeeStart,
};
pub use table::Table;
pub use tasks::{
    BilliardPassageTask, CollisionTask, ConductivityTask, ExchangeTask, InvariantReplica, InvariantTask, ReplicaTask, ReturnTask,
    SeePassageTask, SyntheticLaw, SyntheticTask, TrajectoryTask,
};

use thiserror::Error;

use crate::billiard::BilliardError;
use crate::chain::ChainError;
use crate::estimators::EstimatorError;
use crate::harness::{HarnessError, RunOptions, SeedSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Billiard(#[from] BilliardError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("invalid experiment settings: {0}")]
    Settings(String),
}

/// Seeds and worker pool shared by the replicas of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSettings {
    pub seeds: SeedSpec,
    pub options: RunOptions,
}

impl RunSettings {
    pub fn new(master_seed: u64, workers: usize) -> Self {
        Self { seeds: SeedSpec::new(master_seed), options: RunOptions { workers, progress: false } }
    }

    pub fn with_progress(mut self, progress: bool) -> Self {
        self.options.progress = progress;
        self
    }
}
