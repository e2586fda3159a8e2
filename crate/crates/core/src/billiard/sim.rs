use rand::Rng;
use serde::{Deserialize, Serialize};

use super::contact::{overlap_tolerance, pair_contact, reflect_wall, resolve_disk_collision};
use super::geometry::CellGeometry;
use super::sampling::{resample_cell, DEFAULT_ATTEMPT_BUDGET};
use super::{BilliardError, BilliardState, EventCandidate};
use crate::scalar::{exponential, Real};

/// What a processed event did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind {
    Wall { disk: usize, piece: usize },
    Disk { a: usize, b: usize },
    CrossDisk { a: usize, b: usize },
    BathRefresh { cell: usize },
}

/// A resolved event with the participants' energies before and after.
///
/// For disk events the pair is `(a, b)` with `a < b`; for wall hits the
/// second slot is zero; for a bath refresh both slots hold the cell energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessedEvent<S> {
    pub time: S,
    pub kind: EventKind,
    pub pre: [S; 2],
    pub post: [S; 2],
}

/// Outcome of running to the first collision between disks of different
/// cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCollision<S> {
    /// Time elapsed since the call, or the cap when censored.
    pub elapsed: S,
    pub censored: bool,
    pub pair: Option<(usize, usize)>,
    /// Energies of the pair before and after the collision.
    pub pre: [S; 2],
    pub post: [S; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    None,
    Wall(usize),
    Disk(usize),
}

#[derive(Debug, Clone, Copy)]
struct Next<S> {
    time: S,
    target: Target,
}

/// Event-driven integrator for one billiard state.
///
/// Each disk caches its earliest predicted event; the global next event is
/// the minimum over disks, ties going to the lowest disk index. After an
/// event only the participants and the disks whose cached partner was a
/// participant are recomputed in full; every other disk is checked against
/// the participants' new trajectories.
#[derive(Debug, Clone)]
pub struct BilliardSim<'g, S: Real> {
    geometry: &'g CellGeometry<S>,
    state: BilliardState<S>,
    next: Vec<Next<S>>,
    partners: Vec<Vec<usize>>,
    baths: Vec<Option<S>>,
    pending_refresh: Option<usize>,
    events: u64,
}

impl<'g, S: Real> BilliardSim<'g, S> {
    pub fn new(geometry: &'g CellGeometry<S>, state: BilliardState<S>) -> Result<Self, BilliardError> {
        geometry.validate()?;
        if state.disks.len() != geometry.total_disks() {
            return Err(BilliardError::Contract(format!(
                "state has {} disks, geometry expects {}",
                state.disks.len(),
                geometry.total_disks()
            )));
        }
        let r = geometry.disk_radius;
        for (i, d) in state.disks.iter().enumerate() {
            if d.cell >= geometry.cell_count() {
                return Err(BilliardError::NoSuchCell(d.cell));
            }
            if !geometry.contains(d.cell, d.position) || geometry.wall_clearance(d.cell, d.position) < r - overlap_tolerance::<S>() {
                return Err(BilliardError::Contract(format!("disk {i} is not admissible in cell {}", d.cell)));
            }
            for (j, e) in state.disks.iter().enumerate().skip(i + 1) {
                let sep = (d.position - e.position).norm();
                if sep < r + r - overlap_tolerance::<S>() {
                    return Err(BilliardError::Overlap { a: i, b: j, separation: sep.to_f64_lossy() });
                }
            }
        }
        let partners = (0..state.disks.len())
            .map(|i| {
                let ci = state.disks[i].cell;
                (0..state.disks.len())
                    .filter(|&j| j != i)
                    .filter(|&j| {
                        let cj = state.disks[j].cell;
                        cj == ci || geometry.adjacent(ci, cj)
                    })
                    .collect()
            })
            .collect();
        let n = state.disks.len();
        let mut sim = Self {
            geometry,
            state,
            next: vec![Next { time: S::infinity(), target: Target::None }; n],
            partners,
            baths: vec![None; geometry.cell_count()],
            pending_refresh: None,
            events: 0,
        };
        sim.recompute_all();
        Ok(sim)
    }

    pub fn state(&self) -> &BilliardState<S> {
        &self.state
    }

    pub fn into_state(self) -> BilliardState<S> {
        self.state
    }

    pub fn geometry(&self) -> &'g CellGeometry<S> {
        self.geometry
    }

    pub fn time(&self) -> S {
        self.state.time
    }

    pub fn event_count(&self) -> u64 {
        self.events
    }

    /// Marks `cell` as a heat bath at `temperature`.
    pub fn set_bath(&mut self, cell: usize, temperature: S) -> Result<(), BilliardError> {
        if cell >= self.baths.len() {
            return Err(BilliardError::NoSuchCell(cell));
        }
        if !(temperature > S::zero()) {
            return Err(BilliardError::InvalidEnergy(temperature.to_f64_lossy()));
        }
        self.baths[cell] = Some(temperature);
        Ok(())
    }

    /// Reverses every velocity (for reversibility checks).
    pub fn reverse(&mut self) {
        for d in &mut self.state.disks {
            d.velocity = -d.velocity;
        }
        self.recompute_all();
    }

    /// Pending events, one per disk with a finite prediction, plus a queued
    /// bath refresh.
    pub fn queue(&self) -> Vec<EventCandidate<S>> {
        let mut out: Vec<EventCandidate<S>> = self
            .next
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.target {
                Target::None => None,
                Target::Wall(k) => Some(EventCandidate::WallHit {
                    time: n.time,
                    disk: i,
                    piece: self.geometry.obstacles(self.state.disks[i].cell)[k].piece(),
                }),
                Target::Disk(j) if self.state.disks[i].cell == self.state.disks[j].cell => {
                    Some(EventCandidate::DiskDisk { time: n.time, a: i.min(j), b: i.max(j) })
                }
                Target::Disk(j) => Some(EventCandidate::CrossCell { time: n.time, a: i.min(j), b: i.max(j) }),
            })
            .collect();
        if let Some(cell) = self.pending_refresh {
            out.push(EventCandidate::BathRefresh { time: self.state.time, cell });
        }
        out
    }

    /// Time of the next event, if any disk will ever hit anything.
    pub fn next_event_time(&self) -> Option<S> {
        if self.pending_refresh.is_some() {
            return Some(self.state.time);
        }
        self.earliest().map(|i| self.next[i].time)
    }

    fn earliest(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, n) in self.next.iter().enumerate() {
            if n.target != Target::None && best.is_none_or(|b| n.time < self.next[b].time) {
                best = Some(i);
            }
        }
        best
    }

    fn disk_next(&self, i: usize) -> Next<S> {
        let r = self.geometry.disk_radius;
        let now = self.state.time;
        let d = &self.state.disks[i];
        let mut best = Next { time: S::infinity(), target: Target::None };
        for (k, obstacle) in self.geometry.obstacles(d.cell).iter().enumerate() {
            if let Some(t) = obstacle.time(d.position, d.velocity, r) {
                if now + t < best.time {
                    best = Next { time: now + t, target: Target::Wall(k) };
                }
            }
        }
        for &j in &self.partners[i] {
            if let Some(t) = pair_contact(d, &self.state.disks[j], r) {
                if now + t < best.time {
                    best = Next { time: now + t, target: Target::Disk(j) };
                }
            }
        }
        best
    }

    fn recompute_all(&mut self) {
        for i in 0..self.next.len() {
            self.next[i] = self.disk_next(i);
        }
    }

    fn recompute_after(&mut self, moved: &[usize]) {
        let r = self.geometry.disk_radius;
        let now = self.state.time;
        for i in 0..self.next.len() {
            let stale = moved.contains(&i) || matches!(self.next[i].target, Target::Disk(j) if moved.contains(&j));
            if stale {
                self.next[i] = self.disk_next(i);
            }
        }
        for i in 0..self.next.len() {
            if moved.contains(&i) {
                continue;
            }
            for &a in moved {
                if !self.partners[i].contains(&a) {
                    continue;
                }
                if let Some(t) = pair_contact(&self.state.disks[i], &self.state.disks[a], r) {
                    if now + t < self.next[i].time {
                        self.next[i] = Next { time: now + t, target: Target::Disk(a) };
                    }
                }
            }
        }
    }

    fn drift_to(&mut self, t: S) {
        let dt = t - self.state.time;
        if dt > S::zero() {
            for d in &mut self.state.disks {
                d.position = d.at(dt);
            }
        }
        self.state.time = t;
    }

    /// Processes the earliest pending event of a closed system.
    ///
    /// Fails with [`BilliardError::NoEvent`] when nothing will ever happen
    /// (all disks at rest) and with a contract error if a bath refresh is
    /// pending, which needs [`Self::advance_with_baths`].
    pub fn advance(&mut self) -> Result<ProcessedEvent<S>, BilliardError> {
        if self.pending_refresh.is_some() {
            return Err(BilliardError::Contract("bath refresh pending; advance with an rng".into()));
        }
        let i = self.earliest().ok_or(BilliardError::NoEvent)?;
        let Next { time, target } = self.next[i];
        self.drift_to(time);
        let event = match target {
            Target::None => unreachable!("earliest skips empty targets"),
            Target::Wall(k) => {
                let obstacle = self.geometry.obstacles(self.state.disks[i].cell)[k];
                let d = &mut self.state.disks[i];
                let pre = d.energy();
                let n = obstacle.normal_at(d.position);
                if d.velocity.dot(n) < S::zero() {
                    d.velocity = reflect_wall(d.velocity, n);
                }
                d.position += n * S::nudge();
                let post = d.energy();
                self.recompute_after(&[i]);
                ProcessedEvent {
                    time,
                    kind: EventKind::Wall { disk: i, piece: obstacle.piece() },
                    pre: [pre, S::zero()],
                    post: [post, S::zero()],
                }
            }
            Target::Disk(j) => {
                let (a, b) = (i.min(j), i.max(j));
                let pre = [self.state.disks[a].energy(), self.state.disks[b].energy()];
                let (va, vb) = resolve_disk_collision(&self.state.disks[a], &self.state.disks[b])?;
                let n = (self.state.disks[a].position - self.state.disks[b].position).normalized();
                let half = S::nudge() * S::lit(0.5);
                let (da, db) = self.state.disks[a..=b].split_at_mut(b - a);
                da[0].velocity = va;
                da[0].position += n * half;
                db[0].velocity = vb;
                db[0].position -= n * half;
                let cross = self.state.disks[a].cell != self.state.disks[b].cell;
                self.recompute_after(&[a, b]);
                let post = [self.state.disks[a].energy(), self.state.disks[b].energy()];
                if cross {
                    let (ca, cb) = (self.state.disks[a].cell, self.state.disks[b].cell);
                    match (self.baths[ca].is_some(), self.baths[cb].is_some()) {
                        (true, false) => self.pending_refresh = Some(ca),
                        (false, true) => self.pending_refresh = Some(cb),
                        _ => {}
                    }
                    ProcessedEvent { time, kind: EventKind::CrossDisk { a, b }, pre, post }
                } else {
                    ProcessedEvent { time, kind: EventKind::Disk { a, b }, pre, post }
                }
            }
        };
        self.events += 1;
        Ok(event)
    }

    /// Like [`Self::advance`], but performs a queued bath refresh first.
    pub fn advance_with_baths<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<ProcessedEvent<S>, BilliardError> {
        match self.pending_refresh.take() {
            Some(cell) => {
                let t = self.baths[cell].ok_or(BilliardError::NoSuchCell(cell))?;
                let pre = self.state.cell_energy(cell);
                self.bath_refresh(cell, t, rng)?;
                let post = self.state.cell_energy(cell);
                self.events += 1;
                Ok(ProcessedEvent { time: self.state.time, kind: EventKind::BathRefresh { cell }, pre: [pre, pre], post: [post, post] })
            }
            None => self.advance(),
        }
    }

    /// Redraws the total energy of `cell` from an exponential law with mean
    /// `temperature` and resamples its disks from the conditional Liouville
    /// measure, keeping every other disk fixed.
    pub fn bath_refresh<R: Rng + ?Sized>(&mut self, cell: usize, temperature: S, rng: &mut R) -> Result<S, BilliardError> {
        if !(temperature > S::zero()) {
            return Err(BilliardError::InvalidEnergy(temperature.to_f64_lossy()));
        }
        let energy = exponential(rng, temperature);
        resample_cell(self.geometry, &mut self.state, cell, energy, DEFAULT_ATTEMPT_BUDGET, rng)?;
        self.recompute_all();
        Ok(energy)
    }

    /// Moves every disk ballistically to time `t`; fails if an event is due
    /// first.
    pub fn drift_until(&mut self, t: S) -> Result<(), BilliardError> {
        if let Some(next) = self.next_event_time() {
            if next < t {
                return Err(BilliardError::Contract(format!(
                    "event due at {} before requested time {}",
                    next.to_f64_lossy(),
                    t.to_f64_lossy()
                )));
            }
        }
        self.drift_to(t);
        Ok(())
    }

    /// Processes every event up to and including `t_end`, then lets the
    /// disks fly freely to `t_end`. Returns the number of events.
    pub fn advance_until(&mut self, t_end: S) -> Result<u64, BilliardError> {
        let mut count = 0;
        while let Some(t) = self.next_event_time() {
            if t > t_end {
                break;
            }
            self.advance()?;
            count += 1;
        }
        if t_end > self.state.time {
            self.drift_to(t_end);
        }
        Ok(count)
    }

    /// Runs until two disks of different cells collide, or until `cap` time
    /// units have passed (censored).
    pub fn first_cross_collision(&mut self, cap: S) -> Result<CrossCollision<S>, BilliardError> {
        let start = self.state.time;
        let horizon = start + cap;
        loop {
            match self.next_event_time() {
                Some(t) if t <= horizon => {}
                _ => {
                    self.drift_to(horizon);
                    return Ok(CrossCollision { elapsed: cap, censored: true, pair: None, pre: [S::zero(); 2], post: [S::zero(); 2] });
                }
            }
            let ev = self.advance()?;
            if let EventKind::CrossDisk { a, b } = ev.kind {
                return Ok(CrossCollision { elapsed: ev.time - start, censored: false, pair: Some((a, b)), pre: ev.pre, post: ev.post });
            }
        }
    }
}
