//! Stochastic energy exchange chain.
//!
//! A Markov jump process on `N` nonnegative site energies. Every adjacent
//! pair of sites carries an exponential clock of rate `sqrt(min(E_i, E_j))`;
//! two further clocks couple the end sites to heat baths at temperatures
//! `T_L` and `T_R`. When a clock rings, a Beta(1, M-1) fraction of each
//! participant's energy is pooled and split by a uniform fraction `p`.
//!
//! Bonds are numbered `0..=N`: bond `0` couples the left bath to site 1,
//! bond `k` couples sites `k` and `k+1`, bond `N` couples site `N` to the
//! right bath.

mod rules;
mod ssa;

pub use rules::{bath_exchange, bath_rate, clock_rate, exchange, sample_participation, sample_tail_corrected_initial, ExchangeDraw, Side};
pub use ssa::{simulate, ssa_step, EventCounter, EventSink, FnSink, RateMode, SsaSimulator, StepOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("negative energy {0} passed to a clock rate")]
    NegativeEnergy(f64),
    #[error("non-positive bath temperature {0}")]
    NonPositiveTemperature(f64),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("state has {found} sites, model expects {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("all clock rates vanish at time {time}; the chain is frozen")]
    Frozen { time: f64 },
    #[error("end time {t_end} precedes current time {time}")]
    EndBeforeStart { time: f64, t_end: f64 },
}

/// Chain length, particles per cell and bath temperatures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<S> {
    pub n: usize,
    pub m: usize,
    pub t_left: S,
    pub t_right: S,
}

impl<S: Real> ModelParams<S> {
    pub fn new(n: usize, m: usize, t_left: S, t_right: S) -> Result<Self, ChainError> {
        let params = Self { n, m, t_left, t_right };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if self.n == 0 {
            return Err(ChainError::InvalidParams("chain length N must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(ChainError::InvalidParams("particles per cell M must be at least 1".into()));
        }
        for t in [self.t_left, self.t_right] {
            if !(t > S::zero()) || !t.is_finite() {
                return Err(ChainError::NonPositiveTemperature(t.to_f64_lossy()));
            }
        }
        Ok(())
    }

    /// Number of clocks: `N - 1` internal bonds plus two bath clocks.
    pub fn bond_count(&self) -> usize {
        self.n + 1
    }
}

/// Site energies and the process time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyChain<S> {
    pub energies: Vec<S>,
    pub time: S,
}

impl<S: Real> EnergyChain<S> {
    pub fn new(energies: Vec<S>) -> Result<Self, ChainError> {
        Self::at_time(energies, S::zero())
    }

    pub fn at_time(energies: Vec<S>, time: S) -> Result<Self, ChainError> {
        if let Some(e) = energies.iter().find(|e| !(**e >= S::zero()) || !e.is_finite()) {
            return Err(ChainError::NegativeEnergy(e.to_f64_lossy()));
        }
        Ok(Self { energies, time })
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn total_energy(&self) -> S {
        self.energies.iter().copied().sum()
    }
}

/// One clock ring.
///
/// `pre` and `post` hold the (left member, right member) energies of the
/// bond. For a bath bond the bath member is the bath draw `X` before the
/// exchange and `X + E - E'` after it, so `flux = post[0] - pre[0]` is the
/// energy moved right-to-left for every bond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent<S> {
    pub time: S,
    pub bond: usize,
    pub pre: [S; 2],
    pub post: [S; 2],
    pub flux: S,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(3, 2, 1.0, 2.0).is_ok());
        assert!(matches!(ModelParams::new(0, 2, 1.0, 2.0), Err(ChainError::InvalidParams(_))));
        assert!(matches!(ModelParams::new(3, 0, 1.0, 2.0), Err(ChainError::InvalidParams(_))));
        assert!(matches!(ModelParams::new(3, 2, 0.0, 2.0), Err(ChainError::NonPositiveTemperature(_))));
        assert_eq!(ModelParams::new(4, 2, 1.0f64, 2.0).unwrap().bond_count(), 5);
    }

    #[test]
    fn chain_rejects_negative_energy() {
        assert!(EnergyChain::new(vec![1.0, -1e-9]).is_err());
        assert!(EnergyChain::new(vec![1.0f32, f32::NAN]).is_err());
        let c = EnergyChain::new(vec![1.0, 0.5, 0.0]).unwrap();
        assert_eq!(c.total_energy(), 1.5);
    }
}
