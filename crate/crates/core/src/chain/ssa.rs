//! Exact event-by-event simulation (direct method).

use rand::Rng;

use super::rules::{bath_exchange, bath_rate, clock_rate, exchange, ExchangeDraw};
use super::{ChainError, EnergyChain, JumpEvent, ModelParams};
use crate::scalar::{exponential, open_unit, Real};

/// Receives every jump in time order.
pub trait EventSink<S> {
    fn record(&mut self, event: &JumpEvent<S>, energies: &[S]);
}

impl<S: Copy> EventSink<S> for Vec<JumpEvent<S>> {
    fn record(&mut self, event: &JumpEvent<S>, _energies: &[S]) {
        self.push(*event);
    }
}

/// Counts delivered events.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct EventCounter(pub u64);

impl<S> EventSink<S> for EventCounter {
    fn record(&mut self, _event: &JumpEvent<S>, _energies: &[S]) {
        self.0 += 1;
    }
}

/// Adapts a closure into an [`EventSink`].
pub struct FnSink<F>(pub F);

impl<S, F: FnMut(&JumpEvent<S>, &[S])> EventSink<S> for FnSink<F> {
    fn record(&mut self, event: &JumpEvent<S>, energies: &[S]) {
        (self.0)(event, energies)
    }
}

/// How clock rates are maintained between events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateMode {
    /// Only clocks touching the updated sites are recomputed.
    #[default]
    Incremental,
    /// Every clock is recomputed after each event (reference mode).
    FullRecompute,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome<S> {
    Jump(JumpEvent<S>),
    /// The next ring would fall after the horizon; time was set to it.
    Horizon,
}

/// Direct-method SSA over the `N + 1` clocks of the chain.
#[derive(Debug, Clone)]
pub struct SsaSimulator<S> {
    params: ModelParams<S>,
    state: EnergyChain<S>,
    rates: Vec<S>,
    mode: RateMode,
    events: u64,
}

impl<S: Real> SsaSimulator<S> {
    pub fn new(params: ModelParams<S>, initial: EnergyChain<S>, mode: RateMode) -> Result<Self, ChainError> {
        params.validate()?;
        if initial.len() != params.n {
            return Err(ChainError::LengthMismatch { expected: params.n, found: initial.len() });
        }
        let mut sim = Self { rates: vec![S::zero(); params.n + 1], params, state: initial, mode, events: 0 };
        for bond in 0..=sim.params.n {
            sim.rates[bond] = sim.bond_rate(bond)?;
        }
        Ok(sim)
    }

    pub fn state(&self) -> &EnergyChain<S> {
        &self.state
    }

    pub fn into_state(self) -> EnergyChain<S> {
        self.state
    }

    pub fn params(&self) -> &ModelParams<S> {
        &self.params
    }

    pub fn rates(&self) -> &[S] {
        &self.rates
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Sum of all clock rates, accumulated in bond order.
    pub fn total_rate(&self) -> S {
        self.rates.iter().copied().sum()
    }

    fn bond_rate(&self, bond: usize) -> Result<S, ChainError> {
        let e = &self.state.energies;
        let n = self.params.n;
        if bond == 0 {
            bath_rate(self.params.t_left, e[0])
        } else if bond == n {
            bath_rate(self.params.t_right, e[n - 1])
        } else {
            clock_rate(e[bond - 1], e[bond])
        }
    }

    /// Advances to the next ring, or to `t_end` if the ring would come later.
    pub fn step_until<R: Rng + ?Sized>(&mut self, t_end: S, rng: &mut R) -> Result<StepOutcome<S>, ChainError> {
        let total = self.total_rate();
        if !(total > S::zero()) {
            return Err(ChainError::Frozen { time: self.state.time.to_f64_lossy() });
        }
        let wait = exponential(rng, S::one() / total);
        let time = self.state.time + wait;
        if time > t_end {
            self.state.time = t_end;
            return Ok(StepOutcome::Horizon);
        }
        self.state.time = time;
        let bond = self.select_bond(total, rng);
        let event = self.fire(bond, rng)?;
        Ok(StepOutcome::Jump(event))
    }

    /// Advances by exactly one ring.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<JumpEvent<S>, ChainError> {
        match self.step_until(S::infinity(), rng)? {
            StepOutcome::Jump(event) => Ok(event),
            StepOutcome::Horizon => unreachable!("infinite horizon"),
        }
    }

    fn select_bond<R: Rng + ?Sized>(&self, total: S, rng: &mut R) -> usize {
        let u: S = open_unit(rng);
        let target = u * total;
        let mut acc = S::zero();
        let mut last_positive = 0;
        for (bond, &rate) in self.rates.iter().enumerate() {
            if rate > S::zero() {
                acc = acc + rate;
                last_positive = bond;
                if target < acc {
                    return bond;
                }
            }
        }
        // Rounding can leave `target` marginally above the running sum.
        last_positive
    }

    fn fire<R: Rng + ?Sized>(&mut self, bond: usize, rng: &mut R) -> Result<JumpEvent<S>, ChainError> {
        let n = self.params.n;
        let draw = ExchangeDraw::sample(self.params.m, rng);
        let e = &mut self.state.energies;
        let (pre, post) = if bond == 0 {
            let x = exponential(rng, self.params.t_left);
            let site = e[0];
            let updated = bath_exchange(site, x, &draw);
            e[0] = updated;
            ([x, site], [x + site - updated, updated])
        } else if bond == n {
            let x = exponential(rng, self.params.t_right);
            let site = e[n - 1];
            let updated = bath_exchange(site, x, &draw);
            e[n - 1] = updated;
            ([site, x], [updated, x + site - updated])
        } else {
            let (a, b) = (e[bond - 1], e[bond]);
            let (a2, b2) = exchange(a, b, &draw);
            e[bond - 1] = a2;
            e[bond] = b2;
            ([a, b], [a2, b2])
        };
        let event = JumpEvent { time: self.state.time, bond, pre, post, flux: post[0] - pre[0] };
        self.events += 1;
        match self.mode {
            RateMode::FullRecompute => {
                for b in 0..=n {
                    self.rates[b] = self.bond_rate(b)?;
                }
            }
            RateMode::Incremental => {
                let lo = bond.saturating_sub(1);
                let hi = (bond + 1).min(n);
                for b in lo..=hi {
                    self.rates[b] = self.bond_rate(b)?;
                }
            }
        }
        Ok(event)
    }

    /// Runs until the next ring would pass `t_end`, delivering every event.
    pub fn run_until<R: Rng + ?Sized>(&mut self, t_end: S, rng: &mut R, observers: &mut [&mut dyn EventSink<S>]) -> Result<(), ChainError> {
        if t_end < self.state.time {
            return Err(ChainError::EndBeforeStart { time: self.state.time.to_f64_lossy(), t_end: t_end.to_f64_lossy() });
        }
        if t_end == self.state.time {
            return Ok(());
        }
        loop {
            match self.step_until(t_end, rng)? {
                StepOutcome::Horizon => return Ok(()),
                StepOutcome::Jump(event) => {
                    for obs in observers.iter_mut() {
                        obs.record(&event, &self.state.energies);
                    }
                }
            }
        }
    }
}

/// One SSA step from `state`, recomputing every clock (reference path).
pub fn ssa_step<S: Real, R: Rng + ?Sized>(
    state: &EnergyChain<S>,
    params: &ModelParams<S>,
    rng: &mut R,
) -> Result<(JumpEvent<S>, EnergyChain<S>), ChainError> {
    let mut sim = SsaSimulator::new(*params, state.clone(), RateMode::FullRecompute)?;
    let event = sim.step(rng)?;
    Ok((event, sim.into_state()))
}

/// Simulates from `initial` up to `t_end`.
pub fn simulate<S: Real, R: Rng + ?Sized>(
    params: &ModelParams<S>,
    initial: EnergyChain<S>,
    t_end: S,
    rng: &mut R,
    observers: &mut [&mut dyn EventSink<S>],
) -> Result<EnergyChain<S>, ChainError> {
    let mut sim = SsaSimulator::new(*params, initial, RateMode::Incremental)?;
    sim.run_until(t_end, rng, observers)?;
    Ok(sim.into_state())
}
