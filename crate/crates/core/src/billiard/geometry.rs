//! Cell boundaries, gates and the shipped chain-of-cells layout.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::contact::{prepare_cell, Obstacle};
use super::vec2::Vec2;
use super::BilliardError;
use crate::scalar::Real;

/// Which side of an arc the disks live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Curvature {
    /// Disks stay outside the circle (convex inwards, scattering).
    Dispersing,
    /// Disks stay inside the circle.
    Focusing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Shape<S> {
    Segment {
        a: Vec2<S>,
        b: Vec2<S>,
    },
    /// Arc from `start` sweeping counter-clockwise by `sweep` radians.
    Arc {
        center: Vec2<S>,
        radius: S,
        start: S,
        sweep: S,
        curvature: Curvature,
    },
}

/// A boundary element of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece<S> {
    #[serde(flatten)]
    pub shape: Shape<S>,
}

impl<S: Real> Piece<S> {
    pub fn segment(a: Vec2<S>, b: Vec2<S>) -> Self {
        Self { shape: Shape::Segment { a, b } }
    }

    pub fn circle(center: Vec2<S>, radius: S, curvature: Curvature) -> Self {
        Self { shape: Shape::Arc { center, radius, start: S::zero(), sweep: S::TAU(), curvature } }
    }

    pub fn arc(center: Vec2<S>, radius: S, start: S, sweep: S, curvature: Curvature) -> Self {
        Self { shape: Shape::Arc { center, radius, start, sweep, curvature } }
    }

    /// Free ends of the piece; these act as point obstacles.
    pub fn endpoints(&self) -> Option<[Vec2<S>; 2]> {
        match self.shape {
            Shape::Segment { a, b } => Some([a, b]),
            Shape::Arc { center, radius, start, sweep, .. } => {
                if sweep >= S::TAU() {
                    None
                } else {
                    Some([center + Vec2::from_angle(start) * radius, center + Vec2::from_angle(start + sweep) * radius])
                }
            }
        }
    }

    /// Point of the piece closest to `p`.
    pub fn closest_point(&self, p: Vec2<S>) -> Vec2<S> {
        match self.shape {
            Shape::Segment { a, b } => {
                let d = b - a;
                let len_sq = d.norm_sq();
                let s = if len_sq > S::zero() { ((p - a).dot(d) / len_sq).max(S::zero()).min(S::one()) } else { S::zero() };
                a + d * s
            }
            Shape::Arc { center, radius, start, sweep, .. } => {
                let w = p - center;
                let r = w.norm();
                if r > S::zero() && angle_in_arc(w.angle(), start, sweep) {
                    center + w * (radius / r)
                } else {
                    let [e0, e1] = self.endpoints().unwrap_or([center + Vec2::new(radius, S::zero()); 2]);
                    if (p - e0).norm_sq() <= (p - e1).norm_sq() {
                        e0
                    } else {
                        e1
                    }
                }
            }
        }
    }

    pub fn distance(&self, p: Vec2<S>) -> S {
        (p - self.closest_point(p)).norm()
    }

    /// Number of crossings of the ray `origin + t dir`, `t > 0`, with the piece.
    fn ray_crossings(&self, origin: Vec2<S>, dir: Vec2<S>) -> usize {
        match self.shape {
            Shape::Segment { a, b } => {
                let e = b - a;
                let denom = dir.cross(e);
                if denom == S::zero() {
                    return 0;
                }
                let w = a - origin;
                let t = w.cross(e) / denom;
                let s = w.cross(dir) / denom;
                usize::from(t > S::zero() && s >= S::zero() && s < S::one())
            }
            Shape::Arc { center, radius, start, sweep, .. } => {
                let w = origin - center;
                let b = w.dot(dir);
                let c = w.norm_sq() - radius * radius;
                let disc = b * b - c;
                if disc <= S::zero() {
                    return 0;
                }
                let sq = disc.sqrt();
                [-b - sq, -b + sq]
                    .into_iter()
                    .filter(|&t| t > S::zero())
                    .filter(|&t| angle_in_arc((w + dir * t).angle(), start, sweep))
                    .count()
            }
        }
    }

    fn bounds(&self) -> (Vec2<S>, Vec2<S>) {
        match self.shape {
            Shape::Segment { a, b } => (Vec2::new(a.x.min(b.x), a.y.min(b.y)), Vec2::new(a.x.max(b.x), a.y.max(b.y))),
            Shape::Arc { center, radius, .. } => {
                (Vec2::new(center.x - radius, center.y - radius), Vec2::new(center.x + radius, center.y + radius))
            }
        }
    }
}

/// True when `angle` lies on the arc `[start, start + sweep]` (mod 2π).
pub fn angle_in_arc<S: Real>(angle: S, start: S, sweep: S) -> bool {
    if sweep >= S::TAU() {
        return true;
    }
    let mut rel = (angle - start) % S::TAU();
    if rel < S::zero() {
        rel = rel + S::TAU();
    }
    rel <= sweep
}

/// One billiard table: its walls plus an optional bath flag set by the
/// simulation layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell<S> {
    pub walls: Vec<Piece<S>>,
}

/// Opening shared by two adjacent cells. Disks touch through it but their
/// centres cannot cross it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate<S> {
    pub cells: (usize, usize),
    pub a: Vec2<S>,
    pub b: Vec2<S>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellGeometry<S> {
    pub cells: Vec<Cell<S>>,
    pub gates: Vec<Gate<S>>,
    pub disk_radius: S,
    pub disks_per_cell: usize,
    #[serde(skip)]
    obstacles: OnceLock<Vec<Vec<Obstacle<S>>>>,
}

impl<S: PartialEq> PartialEq for CellGeometry<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cells == other.cells
            && self.gates == other.gates
            && self.disk_radius == other.disk_radius
            && self.disks_per_cell == other.disks_per_cell
    }
}

impl<S: Real> CellGeometry<S> {
    pub fn new(cells: Vec<Cell<S>>, gates: Vec<Gate<S>>, disk_radius: S, disks_per_cell: usize) -> Result<Self, BilliardError> {
        let g = Self { cells, gates, disk_radius, disks_per_cell, obstacles: OnceLock::new() };
        g.validate()?;
        Ok(g)
    }

    /// Walls decomposed into contact primitives, built on first use.
    pub(crate) fn obstacles(&self, cell: usize) -> &[Obstacle<S>] {
        &self.obstacles.get_or_init(|| (0..self.cells.len()).map(|c| prepare_cell(self, c)).collect())[cell]
    }

    pub fn validate(&self) -> Result<(), BilliardError> {
        if self.cells.is_empty() {
            return Err(BilliardError::InvalidGeometry("no cells".into()));
        }
        if !(self.disk_radius > S::zero()) {
            return Err(BilliardError::InvalidGeometry("disk radius must be positive".into()));
        }
        if self.disks_per_cell == 0 {
            return Err(BilliardError::InvalidGeometry("at least one disk per cell".into()));
        }
        for gate in &self.gates {
            let (l, r) = gate.cells;
            if l >= self.cells.len() || r >= self.cells.len() || l == r {
                return Err(BilliardError::InvalidGeometry(format!("gate joins invalid cells {l}, {r}")));
            }
        }
        for (k, cell) in self.cells.iter().enumerate() {
            if cell.walls.is_empty() {
                return Err(BilliardError::InvalidGeometry(format!("cell {k} has no walls")));
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn total_disks(&self) -> usize {
        self.cells.len() * self.disks_per_cell
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.gates.iter().any(|g| g.cells == (a, b) || g.cells == (b, a))
    }

    /// Point-in-cell test by ray-casting parity over walls and gate openings.
    pub fn contains(&self, cell: usize, p: Vec2<S>) -> bool {
        // An irrational-looking direction keeps the ray off vertices.
        let dir = Vec2::from_angle(S::lit(0.618_033_988_749_894_9));
        let mut crossings: usize = self.cells[cell].walls.iter().map(|w| w.ray_crossings(p, dir)).sum();
        for gate in self.gates.iter().filter(|g| g.cells.0 == cell || g.cells.1 == cell) {
            crossings += Piece::segment(gate.a, gate.b).ray_crossings(p, dir);
        }
        crossings % 2 == 1
    }

    /// Smallest distance from `p` to any wall of the cell.
    pub fn wall_clearance(&self, cell: usize, p: Vec2<S>) -> S {
        self.cells[cell].walls.iter().map(|w| w.distance(p)).fold(S::infinity(), S::min)
    }

    /// Whether a disk centred at `p` fits in the cell without touching a wall.
    pub fn admissible(&self, cell: usize, p: Vec2<S>) -> bool {
        self.contains(cell, p) && self.wall_clearance(cell, p) > self.disk_radius
    }

    /// Axis-aligned bounding box of the cell's walls.
    pub fn bounds(&self, cell: usize) -> (Vec2<S>, Vec2<S>) {
        let mut lo = Vec2::new(S::infinity(), S::infinity());
        let mut hi = Vec2::new(S::neg_infinity(), S::neg_infinity());
        for w in &self.cells[cell].walls {
            let (a, b) = w.bounds();
            lo = Vec2::new(lo.x.min(a.x), lo.y.min(a.y));
            hi = Vec2::new(hi.x.max(b.x), hi.y.max(b.y));
        }
        (lo, hi)
    }
}

/// Parameters of the shipped layout: a row of square cells, each with a
/// central dispersing scatterer, joined by gates narrower than a disk
/// diameter so centres can never pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainLayout {
    pub cells: usize,
    pub cell_width: f64,
    pub cell_height: f64,
    pub scatterer_radius: f64,
    pub gate_width: f64,
    pub disk_radius: f64,
    pub disks_per_cell: usize,
}

impl Default for ChainLayout {
    fn default() -> Self {
        Self {
            cells: 2,
            cell_width: 0.45,
            cell_height: 0.45,
            scatterer_radius: 0.06,
            gate_width: 0.095,
            disk_radius: 0.05,
            disks_per_cell: 3,
        }
    }
}

impl ChainLayout {
    pub fn with_disks(mut self, m: usize) -> Self {
        self.disks_per_cell = m;
        self
    }

    pub fn build<S: Real>(&self) -> Result<CellGeometry<S>, BilliardError> {
        if self.gate_width <= 0.0 || self.gate_width >= 2.0 * self.disk_radius {
            return Err(BilliardError::InvalidGeometry(format!(
                "gate width {} must lie in (0, 2r = {})",
                self.gate_width,
                2.0 * self.disk_radius
            )));
        }
        if self.gate_width >= self.cell_height {
            return Err(BilliardError::InvalidGeometry("gate wider than the cell".into()));
        }
        let clearance = 0.5 * self.cell_width.min(self.cell_height) - self.scatterer_radius;
        if self.scatterer_radius < 0.0 || clearance <= 2.0 * self.disk_radius {
            return Err(BilliardError::InvalidGeometry("scatterer leaves no room for disks".into()));
        }
        let v = |x: f64, y: f64| Vec2::new(S::lit(x), S::lit(y));
        let (w, h, g) = (self.cell_width, 0.5 * self.cell_height, 0.5 * self.gate_width);
        let mut cells = Vec::with_capacity(self.cells);
        let mut gates = Vec::new();
        for k in 0..self.cells {
            let x0 = k as f64 * w;
            let x1 = x0 + w;
            let mut walls = vec![Piece::segment(v(x0, -h), v(x1, -h)), Piece::segment(v(x1, h), v(x0, h))];
            for (x, gated) in [(x0, k > 0), (x1, k + 1 < self.cells)] {
                if gated {
                    walls.push(Piece::segment(v(x, -h), v(x, -g)));
                    walls.push(Piece::segment(v(x, g), v(x, h)));
                } else {
                    walls.push(Piece::segment(v(x, -h), v(x, h)));
                }
            }
            if self.scatterer_radius > 0.0 {
                walls.push(Piece::circle(v(x0 + 0.5 * w, 0.0), S::lit(self.scatterer_radius), Curvature::Dispersing));
            }
            cells.push(Cell { walls });
            if k + 1 < self.cells {
                gates.push(Gate { cells: (k, k + 1), a: v(x1, -g), b: v(x1, g) });
            }
        }
        CellGeometry::new(cells, gates, S::lit(self.disk_radius), self.disks_per_cell)
    }
}

/// Geometry as it appears in configuration: either the parametrised chain
/// layout or explicit cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeometrySpec {
    Chain(ChainLayout),
    Custom(CellGeometry<f64>),
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self::Chain(ChainLayout::default())
    }
}

impl GeometrySpec {
    pub fn build<S: Real>(&self) -> Result<CellGeometry<S>, BilliardError> {
        match self {
            Self::Chain(layout) => layout.build(),
            Self::Custom(g) => {
                let conv = |p: Vec2<f64>| Vec2::new(S::lit(p.x), S::lit(p.y));
                let cells = g
                    .cells
                    .iter()
                    .map(|c| Cell {
                        walls: c
                            .walls
                            .iter()
                            .map(|w| match w.shape {
                                Shape::Segment { a, b } => Piece::segment(conv(a), conv(b)),
                                Shape::Arc { center, radius, start, sweep, curvature } => {
                                    Piece::arc(conv(center), S::lit(radius), S::lit(start), S::lit(sweep), curvature)
                                }
                            })
                            .collect(),
                    })
                    .collect();
                let gates = g.gates.iter().map(|gt| Gate { cells: gt.cells, a: conv(gt.a), b: conv(gt.b) }).collect();
                CellGeometry::new(cells, gates, S::lit(g.disk_radius), g.disks_per_cell)
            }
        }
    }

    pub fn disks_per_cell(&self) -> usize {
        match self {
            Self::Chain(l) => l.disks_per_cell,
            Self::Custom(g) => g.disks_per_cell,
        }
    }

    pub fn with_disks(&self, m: usize) -> Self {
        match self {
            Self::Chain(l) => Self::Chain(l.with_disks(m)),
            Self::Custom(g) => {
                let mut g = g.clone();
                g.disks_per_cell = m;
                Self::Custom(g)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ChainLayout {
        ChainLayout { cell_width: 0.4, cell_height: 0.4, scatterer_radius: 0.08, ..ChainLayout::default() }
    }

    fn two_cell() -> CellGeometry<f64> {
        small().build().unwrap()
    }

    #[test]
    fn containment_by_parity() {
        let g = two_cell();
        assert!(g.contains(0, Vec2::new(0.1, 0.1)));
        assert!(!g.contains(0, Vec2::new(0.5, 0.1)));
        assert!(g.contains(1, Vec2::new(0.5, 0.1)));
        // inside the scatterer, and above the cell
        assert!(!g.contains(0, Vec2::new(0.2, 0.02)));
        assert!(!g.contains(0, Vec2::new(0.2, 0.3)));
        // either side of the gate line
        assert!(g.contains(0, Vec2::new(0.39, 0.0)));
        assert!(g.contains(1, Vec2::new(0.41, 0.0)));
        assert!(!g.contains(1, Vec2::new(0.39, 0.0)));
    }

    #[test]
    fn admissibility_respects_radius() {
        let g = two_cell();
        assert!(g.admissible(0, Vec2::new(0.1, 0.1)));
        assert!(!g.admissible(0, Vec2::new(0.03, 0.1)));
        assert!(!g.admissible(0, Vec2::new(0.2, 0.125)));
        assert!(g.admissible(0, Vec2::new(0.2, 0.135)));
        // gate post at (0.4, 0.0475)
        assert!(!g.admissible(0, Vec2::new(0.385, 0.0)));
        assert!(g.admissible(0, Vec2::new(0.38, 0.0)));
    }

    #[test]
    fn closest_point_on_arc_and_segment() {
        let seg: Piece<f64> = Piece::segment(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0));
        assert_eq!(seg.closest_point(Vec2::new(0.5, 2.0)), Vec2::new(0.5, 0.0));
        assert_eq!(seg.closest_point(Vec2::new(-1.0, 1.0)), Vec2::new(0.0, 0.0));
        let half = Piece::arc(Vec2::new(0.0, 0.0), 1.0, 0.0, std::f64::consts::PI, Curvature::Dispersing);
        let c = half.closest_point(Vec2::new(0.0, 3.0));
        assert!((c.y - 1.0).abs() < 1e-15 && c.x.abs() < 1e-15);
        let c = half.closest_point(Vec2::new(0.5, -3.0));
        assert!((c.x - 1.0).abs() < 1e-15);
    }

    #[test]
    fn arc_angle_interval() {
        assert!(angle_in_arc(0.1f64, 0.0, 0.5));
        assert!(!angle_in_arc(-0.1f64, 0.0, 0.5));
        assert!(angle_in_arc(-0.1f64, -0.2, 0.5));
        assert!(angle_in_arc(3.0f64, 2.5, 1.5));
        assert!(angle_in_arc(-3.0f64, 2.5, 1.5));
    }

    #[test]
    fn layout_rejects_passable_gate() {
        let bad = ChainLayout { gate_width: 0.2, ..small() };
        assert!(bad.build::<f64>().is_err());
        let cramped = ChainLayout { scatterer_radius: 0.15, ..small() };
        assert!(cramped.build::<f64>().is_err());
    }

    #[test]
    fn spec_round_trips_through_toml_like_json() {
        let spec = GeometrySpec::default();
        let text = serde_json::to_string(&spec).unwrap();
        let back: GeometrySpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
        let custom = GeometrySpec::Custom(two_cell());
        let text = serde_json::to_string(&custom).unwrap();
        let back: GeometrySpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back.build::<f64>().unwrap(), two_cell());
    }
}
