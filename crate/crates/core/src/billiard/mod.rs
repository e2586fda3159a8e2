//! Event-driven hard-disk billiard made of cells joined by gates.
//!
//! Disks have mass 2, so a disk's kinetic energy is `|v|^2`. They move
//! ballistically, reflect specularly off cell walls and collide elastically
//! with each other. A gate is an opening narrower than a disk diameter:
//! disks on either side can touch through it, which is the only way energy
//! moves between cells, but no centre can pass.

mod contact;
mod eventlog;
mod geometry;
mod sampling;
mod sim;
mod vec2;

pub use contact::{reflect_wall, resolve_disk_collision, time_to_disk, time_to_wall};
pub use eventlog::{read_event_log, EventLogWriter, LoggedEvent, EVENT_RECORD_BYTES};
pub use geometry::{angle_in_arc, Cell, CellGeometry, ChainLayout, Curvature, Gate, GeometrySpec, Piece, Shape};
pub use sampling::{sample_cell_velocities, sample_conditional_liouville, DEFAULT_ATTEMPT_BUDGET};
pub use sim::{BilliardSim, CrossCollision, EventKind, ProcessedEvent};
pub use vec2::Vec2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BilliardError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("disks {a} and {b} overlap (separation {separation})")]
    Overlap { a: usize, b: usize, separation: f64 },
    #[error("could not place disks in cell {cell} after {attempts} attempts; geometry too tight")]
    TooTight { cell: usize, attempts: usize },
    #[error("cell energies: expected {expected}, got {found}")]
    EnergyCount { expected: usize, found: usize },
    #[error("invalid cell energy {0}")]
    InvalidEnergy(f64),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("no pending event although disks are moving")]
    NoEvent,
    #[error("cell {0} does not exist")]
    NoSuchCell(usize),
}

/// Centre, velocity and home cell of one disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskState<S> {
    pub position: Vec2<S>,
    pub velocity: Vec2<S>,
    pub cell: usize,
}

impl<S: Real> DiskState<S> {
    pub fn new(position: Vec2<S>, velocity: Vec2<S>, cell: usize) -> Self {
        Self { position, velocity, cell }
    }

    pub fn energy(&self) -> S {
        self.velocity.norm_sq()
    }

    /// Position after free flight for `dt`.
    #[inline]
    pub fn at(&self, dt: S) -> Vec2<S> {
        self.position + self.velocity * dt
    }
}

/// All disks and the current time. Disks are stored cell by cell, `M`
/// consecutive entries per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilliardState<S> {
    pub disks: Vec<DiskState<S>>,
    pub time: S,
}

impl<S: Real> BilliardState<S> {
    pub fn total_energy(&self) -> S {
        self.disks.iter().map(DiskState::energy).sum()
    }

    pub fn cell_energies(&self, cells: usize) -> Vec<S> {
        let mut out = vec![S::zero(); cells];
        for d in &self.disks {
            out[d.cell] = out[d.cell] + d.energy();
        }
        out
    }

    pub fn cell_energy(&self, cell: usize) -> S {
        self.disks.iter().filter(|d| d.cell == cell).map(DiskState::energy).sum()
    }

    /// Smallest centre distance minus `2r` over all pairs.
    pub fn min_pair_gap(&self, r: S) -> S {
        let mut gap = S::infinity();
        for (i, a) in self.disks.iter().enumerate() {
            for b in &self.disks[i + 1..] {
                gap = gap.min((a.position - b.position).norm() - r - r);
            }
        }
        gap
    }

    /// Smallest wall distance minus `r` over all disks.
    pub fn min_wall_gap(&self, geometry: &CellGeometry<S>) -> S {
        self.disks.iter().map(|d| geometry.wall_clearance(d.cell, d.position) - geometry.disk_radius).fold(S::infinity(), S::min)
    }
}

/// A predicted event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventCandidate<S> {
    WallHit { time: S, disk: usize, piece: usize },
    DiskDisk { time: S, a: usize, b: usize },
    CrossCell { time: S, a: usize, b: usize },
    BathRefresh { time: S, cell: usize },
}

impl<S: Real> EventCandidate<S> {
    pub fn time(&self) -> S {
        match *self {
            Self::WallHit { time, .. } | Self::DiskDisk { time, .. } | Self::CrossCell { time, .. } | Self::BathRefresh { time, .. } => {
                time
            }
        }
    }
}
