use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;

/// Outcome of advancing a process towards a time limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepResult {
    /// The observed energies changed; the process sits at the change time.
    Changed,
    /// Nothing changed before the limit; the process sits at the limit.
    Reached,
}

/// A process whose energies are observed for passage times.
pub trait PassageProcess {
    fn time(&self) -> f64;
    fn energies(&self) -> &[f64];
    /// Advances to the next change of the observed energies, or to `limit`
    /// if none happens first.
    fn step_until(&mut self, limit: f64, rng: &mut ChaCha8Rng) -> Result<StepResult, ExperimentError>;
    fn events(&self) -> u64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassageSample {
    pub tau: f64,
    pub censored: bool,
    pub events: u64,
}

/// `tau(h) = inf{t >= h : energies(t) in target}`, measured from the
/// process's current time; censored at `cap`.
pub fn passage_time<P: PassageProcess, F: Fn(&[f64]) -> bool>(
    process: &mut P,
    target: F,
    h: f64,
    cap: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PassageSample, ExperimentError> {
    let start = process.time();
    let t_h = start + h.min(cap);
    while process.step_until(t_h, rng)? == StepResult::Changed {}
    if target(process.energies()) {
        return Ok(PassageSample { tau: h, censored: false, events: process.events() });
    }
    let horizon = start + cap;
    loop {
        match process.step_until(horizon, rng)? {
            StepResult::Changed => {
                if target(process.energies()) {
                    return Ok(PassageSample { tau: process.time() - start, censored: false, events: process.events() });
                }
            }
            StepResult::Reached => return Ok(PassageSample { tau: cap, censored: true, events: process.events() }),
        }
    }
}

/// Every cell holds at least `threshold` energy.
pub fn high_energy_target(threshold: f64) -> impl Fn(&[f64]) -> bool {
    move |e: &[f64]| e.iter().all(|&x| x >= threshold)
}
