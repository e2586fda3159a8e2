use super::geometry::{angle_in_arc, CellGeometry, Curvature, Piece, Shape};
use super::vec2::Vec2;
use super::{BilliardError, DiskState};
use crate::scalar::Real;

/// Earliest `t >= 0` with `|w + v t| = rho` while approaching from outside.
///
/// Returns `None` when the relative motion is separating, misses, or the
/// normal speed at contact is below the grazing threshold.
#[inline]
fn outer_contact<S: Real>(w: Vec2<S>, v: Vec2<S>, rho: S) -> Option<S> {
    let a = v.norm_sq();
    if a == S::zero() {
        return None;
    }
    let b = w.dot(v);
    if b >= S::zero() {
        return None;
    }
    let c = w.norm_sq() - rho * rho;
    let disc = b * b - a * c;
    if disc <= S::zero() {
        return None;
    }
    let sq = disc.sqrt();
    if sq < S::grazing_speed() * rho {
        return None;
    }
    // Stable form of the smaller root.
    let t = c / (-b + sq);
    Some(t.max(S::zero()))
}

/// Time until `p + v t` reaches distance `rho` from the origin from inside.
#[inline]
fn inner_contact<S: Real>(w: Vec2<S>, v: Vec2<S>, rho: S) -> Option<S> {
    let a = v.norm_sq();
    if a == S::zero() {
        return None;
    }
    let b = w.dot(v);
    let c = w.norm_sq() - rho * rho;
    if c >= S::zero() {
        // Already at or beyond the boundary: contact now if moving outward.
        return if b > S::zero() { Some(S::zero()) } else { None };
    }
    let disc = b * b - a * c;
    let sq = disc.sqrt();
    if sq < S::grazing_speed() * rho {
        return None;
    }
    let t = if b > S::zero() { -c / (b + sq) } else { (sq - b) / a };
    Some(t.max(S::zero()))
}

fn cap_contact<S: Real>(p: Vec2<S>, v: Vec2<S>, ends: Option<[Vec2<S>; 2]>, r: S) -> Option<S> {
    let [e0, e1] = ends?;
    min_opt(outer_contact(p - e0, v, r), outer_contact(p - e1, v, r))
}

#[inline]
fn min_opt<S: Real>(a: Option<S>, b: Option<S>) -> Option<S> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Time until a disk of radius `r` becomes tangent to `piece`.
///
/// Segments are two-sided; their endpoints, and the endpoints of partial
/// arcs, are point obstacles.
pub fn time_to_wall<S: Real>(disk: &DiskState<S>, piece: &Piece<S>, r: S) -> Option<S> {
    let p = disk.position;
    let v = disk.velocity;
    if v.norm_sq() == S::zero() {
        return None;
    }
    match piece.shape {
        Shape::Segment { a, b } => {
            let d = b - a;
            let len = d.norm();
            let nrm = d.perp() * (S::one() / len);
            let s0 = (p - a).dot(nrm);
            let vn = v.dot(nrm);
            let side = if s0 >= S::zero() { S::one() } else { -S::one() };
            let mut best = None;
            if side * vn < -S::grazing_speed() {
                let t = ((side * r - s0) / vn).max(S::zero());
                let proj = (p + v * t - a).dot(d) / len;
                if proj >= S::zero() && proj <= len {
                    best = Some(t);
                }
            }
            min_opt(best, cap_contact(p, v, Some([a, b]), r))
        }
        Shape::Arc { center, radius, start, sweep, curvature } => {
            let w = p - center;
            let body = match curvature {
                Curvature::Dispersing => outer_contact(w, v, radius + r),
                Curvature::Focusing => inner_contact(w, v, radius - r),
            }
            .filter(|&t| sweep >= S::TAU() || angle_in_arc((w + v * t).angle(), start, sweep));
            min_opt(body, cap_contact(p, v, piece.endpoints(), r))
        }
    }
}

/// A wall piece broken into primitives with precomputed data, as used by
/// the event loop. Endpoint caps that no admissible disk can touch (such
/// as convex corners) are dropped.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Obstacle<S> {
    Line { a: Vec2<S>, dir: Vec2<S>, normal: Vec2<S>, len: S, piece: usize },
    Circle { center: Vec2<S>, rho: S, focusing: bool, start: S, sweep: S, piece: usize },
    Point { at: Vec2<S>, piece: usize },
}

impl<S: Real> Obstacle<S> {
    pub(crate) fn piece(&self) -> usize {
        match *self {
            Self::Line { piece, .. } | Self::Circle { piece, .. } | Self::Point { piece, .. } => piece,
        }
    }

    #[inline]
    pub(crate) fn time(&self, p: Vec2<S>, v: Vec2<S>, r: S) -> Option<S> {
        match *self {
            Self::Line { a, dir, normal, len, .. } => {
                let s0 = (p - a).dot(normal);
                let vn = v.dot(normal);
                let side = if s0 >= S::zero() { S::one() } else { -S::one() };
                if side * vn >= -S::grazing_speed() {
                    return None;
                }
                let t = ((side * r - s0) / vn).max(S::zero());
                let proj = (p + v * t - a).dot(dir);
                (proj >= S::zero() && proj <= len).then_some(t)
            }
            Self::Circle { center, rho, focusing, start, sweep, .. } => {
                let w = p - center;
                let t = if focusing { inner_contact(w, v, rho) } else { outer_contact(w, v, rho) }?;
                (sweep >= S::TAU() || angle_in_arc((w + v * t).angle(), start, sweep)).then_some(t)
            }
            Self::Point { at, .. } => outer_contact(p - at, v, r),
        }
    }

    /// Unit normal at contact, pointing from the obstacle to the disk centre.
    pub(crate) fn normal_at(&self, p: Vec2<S>) -> Vec2<S> {
        match *self {
            Self::Line { a, normal, .. } => {
                if (p - a).dot(normal) >= S::zero() {
                    normal
                } else {
                    -normal
                }
            }
            Self::Circle { center, focusing, .. } => {
                let n = (p - center).normalized();
                if focusing {
                    -n
                } else {
                    n
                }
            }
            Self::Point { at, .. } => (p - at).normalized(),
        }
    }
}

pub(crate) fn prepare_cell<S: Real>(geometry: &CellGeometry<S>, cell: usize) -> Vec<Obstacle<S>> {
    let r = geometry.disk_radius;
    let mut out = Vec::new();
    let mut caps = Vec::new();
    for (piece, w) in geometry.cells[cell].walls.iter().enumerate() {
        match w.shape {
            Shape::Segment { a, b } => {
                let d = b - a;
                let len = d.norm();
                let dir = d * (S::one() / len);
                out.push(Obstacle::Line { a, dir, normal: dir.perp(), len, piece });
            }
            Shape::Arc { center, radius, start, sweep, curvature } => {
                let focusing = curvature == Curvature::Focusing;
                let rho = if focusing { radius - r } else { radius + r };
                out.push(Obstacle::Circle { center, rho, focusing, start, sweep, piece });
            }
        }
        if let Some(ends) = w.endpoints() {
            for at in ends {
                if cap_reachable(geometry, cell, at) {
                    caps.push(Obstacle::Point { at, piece });
                }
            }
        }
    }
    out.extend(caps);
    out
}

/// Whether some admissible centre touches the point `at`.
fn cap_reachable<S: Real>(geometry: &CellGeometry<S>, cell: usize, at: Vec2<S>) -> bool {
    let r = geometry.disk_radius;
    let steps = 720;
    (0..steps).any(|k| {
        let theta = S::TAU() * S::from_usize_lossy(k) / S::from_usize_lossy(steps);
        let q = at + Vec2::from_angle(theta) * (r * (S::one() + S::lit(1e-9)));
        geometry.contains(cell, q) && geometry.wall_clearance(cell, q) >= r * (S::one() - S::lit(1e-6))
    })
}

/// Contact time of two disks of radius `r` without the overlap check.
#[inline]
pub(crate) fn pair_contact<S: Real>(a: &DiskState<S>, b: &DiskState<S>, r: S) -> Option<S> {
    outer_contact(a.position - b.position, a.velocity - b.velocity, r + r)
}

/// Smallest `t > 0` at which two disks of radius `r` touch.
pub fn time_to_disk<S: Real>(a: &DiskState<S>, b: &DiskState<S>, r: S) -> Result<Option<S>, BilliardError> {
    let separation = (a.position - b.position).norm();
    if separation < r + r - overlap_tolerance::<S>() {
        return Err(BilliardError::Overlap { a: 0, b: 1, separation: separation.to_f64_lossy() });
    }
    Ok(pair_contact(a, b, r))
}

pub(crate) fn overlap_tolerance<S: Real>() -> S {
    S::nudge() * S::lit(10.0)
}

/// Specular reflection `v - 2 (v.n) n` off a wall with unit normal `n`.
#[inline]
pub fn reflect_wall<S: Real>(v: Vec2<S>, n: Vec2<S>) -> Vec2<S> {
    v - n * (S::lit(2.0) * v.dot(n))
}

/// Equal-mass elastic collision: the normal components of the velocities
/// along the line of centres are exchanged.
///
/// A grazing pair (normal relative speed below the threshold) keeps its
/// velocities; a separating pair is a contract violation.
pub fn resolve_disk_collision<S: Real>(a: &DiskState<S>, b: &DiskState<S>) -> Result<(Vec2<S>, Vec2<S>), BilliardError> {
    let d = a.position - b.position;
    let dist_sq = d.norm_sq();
    if dist_sq == S::zero() {
        return Err(BilliardError::Contract("coincident disk centres".into()));
    }
    let u = a.velocity - b.velocity;
    let k = u.dot(d) / dist_sq;
    if k.abs() * dist_sq.sqrt() < S::grazing_speed() {
        return Ok((a.velocity, b.velocity));
    }
    if k > S::zero() {
        return Err(BilliardError::Contract("disks are separating".into()));
    }
    Ok((a.velocity - d * k, b.velocity + d * k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn disk(x: f64, y: f64, vx: f64, vy: f64) -> DiskState<f64> {
        DiskState::new(Vec2::new(x, y), Vec2::new(vx, vy), 0)
    }

    fn wall_x5() -> Piece<f64> {
        Piece::segment(Vec2::new(5.0, -100.0), Vec2::new(5.0, 100.0))
    }

    #[test]
    fn wall_examples() {
        assert_eq!(time_to_wall(&disk(0.0, 0.0, 1.0, 0.0), &wall_x5(), 0.5), Some(4.5));
        assert_eq!(time_to_wall(&disk(0.0, 0.0, 0.0, 1.0), &wall_x5(), 0.5), None);
        let table = Piece::circle(Vec2::new(0.0, 0.0), 3.0, Curvature::Focusing);
        assert_eq!(time_to_wall(&disk(0.0, 0.0, 2.0, 0.0), &table, 0.5), Some(1.25));
        assert_eq!(time_to_wall(&disk(0.0, 0.0, 0.0, 0.0), &table, 0.5), None);
    }

    #[test]
    fn dispersing_arc_and_caps() {
        let post = Piece::circle(Vec2::new(3.0, 0.0), 1.0, Curvature::Dispersing);
        assert!((time_to_wall(&disk(0.0, 0.0, 1.0, 0.0), &post, 0.5).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(time_to_wall(&disk(0.0, 0.0, -1.0, 0.0), &post, 0.5), None);
        // upper half arc only: a disk aimed at the lower half passes its missing part
        let upper = Piece::arc(Vec2::new(3.0, 0.0), 1.0, 0.0, PI, Curvature::Dispersing);
        assert_eq!(time_to_wall(&disk(0.0, -0.9, 1.0, 0.0), &upper, 0.05), None);
        // but it hits the endpoint cap at (2, 0) when aimed at it
        let t = time_to_wall(&disk(0.0, 0.0, 1.0, 0.0), &upper, 0.5).unwrap();
        assert!((t - 1.5).abs() < 1e-15);
        // segment end acts as a point
        let seg = Piece::segment(Vec2::new(5.0, 0.3), Vec2::new(5.0, 10.0));
        let t = time_to_wall(&disk(0.0, 0.0, 1.0, 0.0), &seg, 0.5).unwrap();
        assert!((t - 4.6).abs() < 1e-14);
        assert_eq!(time_to_wall(&disk(0.0, 0.0, 1.0, 0.0), &Piece::segment(Vec2::new(5.0, 0.6), Vec2::new(5.0, 10.0)), 0.5), None);
    }

    #[test]
    fn only_gate_posts_are_reachable_caps() {
        let g: CellGeometry<f64> = crate::billiard::ChainLayout::default().build().unwrap();
        let left = prepare_cell(&g, 0);
        let caps: Vec<_> = left.iter().filter_map(|o| if let Obstacle::Point { at, .. } = o { Some(*at) } else { None }).collect();
        assert_eq!(caps.len(), 2);
        assert!(caps.iter().all(|c| (c.x - 0.45).abs() < 1e-15));
        let middle: CellGeometry<f64> = crate::billiard::ChainLayout { cells: 3, ..Default::default() }.build().unwrap();
        assert_eq!(prepare_cell(&middle, 1).iter().filter(|o| matches!(o, Obstacle::Point { .. })).count(), 4);
    }

    #[test]
    fn prepared_obstacles_agree_with_pieces() {
        let g: CellGeometry<f64> = crate::billiard::ChainLayout::default().build().unwrap();
        let obstacles = prepare_cell(&g, 0);
        let r = g.disk_radius;
        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..5000 {
            let p = Vec2::new(next() * 0.45, next() * 0.45 - 0.225);
            if !g.admissible(0, p) {
                continue;
            }
            let d = DiskState::new(p, Vec2::from_angle(next() * 6.3), 0);
            let from_pieces = g.cells[0].walls.iter().filter_map(|w| time_to_wall(&d, w, r)).fold(f64::INFINITY, f64::min);
            let from_obstacles = obstacles.iter().filter_map(|o| o.time(d.position, d.velocity, r)).fold(f64::INFINITY, f64::min);
            assert!((from_pieces - from_obstacles).abs() < 1e-12, "{from_pieces} vs {from_obstacles}");
        }
    }

    #[test]
    fn segment_two_sided() {
        let t = time_to_wall(&disk(9.0, 0.0, -2.0, 0.0), &wall_x5(), 0.5).unwrap();
        assert!((t - 1.75).abs() < 1e-15);
    }

    #[test]
    fn disk_examples() {
        let a = disk(0.0, 0.0, 1.0, 0.0);
        let b = disk(4.0, 0.0, -1.0, 0.0);
        assert_eq!(time_to_disk(&a, &b, 0.5).unwrap(), Some(1.5));
        let a_rev = disk(0.0, 0.0, -1.0, 0.0);
        let b_rev = disk(4.0, 0.0, 1.0, 0.0);
        assert_eq!(time_to_disk(&a_rev, &b_rev, 0.5).unwrap(), None);
        let c = disk(0.0, 10.0, 1.0, 0.0);
        assert_eq!(time_to_disk(&a, &c, 0.5).unwrap(), None);
        let overlapping = disk(0.5, 0.0, 0.0, 0.0);
        assert!(matches!(time_to_disk(&a, &overlapping, 0.5), Err(BilliardError::Overlap { .. })));
    }

    #[test]
    fn reflection_examples() {
        let n = Vec2::new(0.0, 1.0);
        assert_eq!(reflect_wall(Vec2::new(1.0, -1.0), n), Vec2::new(1.0, 1.0));
        assert_eq!(reflect_wall(Vec2::new(0.0, -3.0), n), Vec2::new(0.0, 3.0));
        let v = Vec2::new(0.3, -0.7);
        let m = Vec2::new(1.0, 2.0).normalized();
        let twice = reflect_wall(reflect_wall(v, m), m);
        assert!((twice - v).norm() < 1e-15);
    }

    #[test]
    fn head_on_swap() {
        let a = disk(0.0, 0.0, 1.0, 0.0);
        let b = disk(1.0, 0.0, -1.0, 0.0);
        let (va, vb) = resolve_disk_collision(&a, &b).unwrap();
        assert_eq!(va, Vec2::new(-1.0, 0.0));
        assert_eq!(vb, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn post_collision_energy_formula() {
        // Disk 1 moves perpendicular to the line of centres, disk 2 along it
        // towards disk 1: the whole of E2 lands on disk 1.
        let (e1, e2) = (0.3f64, 0.7f64);
        let a = disk(0.0, 0.0, 0.0, e1.sqrt());
        let b = disk(1.0, 0.0, -e2.sqrt(), 0.0);
        let (va, vb) = resolve_disk_collision(&a, &b).unwrap();
        assert!((va.norm_sq() - 1.0).abs() < 1e-15);
        assert!(vb.norm_sq() < 1e-30);
        // General angles against E1 sin^2(th1) + E2 cos^2(th2), angles measured
        // from the direction of x1 - x2.
        let gamma = 0.4f64;
        let n = Vec2::from_angle(gamma);
        for (th1, th2) in [(2.5f64, 0.3f64), (FRAC_PI_2 + 0.2, -0.4), (3.0, 1.0)] {
            let v1 = Vec2::from_angle(gamma + th1) * e1.sqrt();
            let v2 = Vec2::from_angle(gamma + th2) * e2.sqrt();
            let a = DiskState::new(n * 1.0, v1, 0);
            let b = DiskState::new(Vec2::zero(), v2, 1);
            let (va, vb) = resolve_disk_collision(&a, &b).unwrap();
            let predicted = e1 * th1.sin().powi(2) + e2 * th2.cos().powi(2);
            assert!((va.norm_sq() - predicted).abs() < 1e-14);
            assert!((va.norm_sq() + vb.norm_sq() - e1 - e2).abs() < 1e-14);
            assert!((va + vb - v1 - v2).norm() < 1e-14);
        }
    }

    #[test]
    fn grazing_and_separating() {
        let a = disk(0.0, 0.0, 0.0, 1.0);
        let b = disk(1.0, 0.0, 0.0, -1.0);
        let (va, vb) = resolve_disk_collision(&a, &b).unwrap();
        assert_eq!((va, vb), (a.velocity, b.velocity));
        let sep = disk(1.0, 0.0, 1.0, 0.0);
        assert!(resolve_disk_collision(&disk(0.0, 0.0, -1.0, 0.0), &sep).is_err());
    }
}
