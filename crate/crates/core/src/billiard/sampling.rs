use rand::Rng;

use super::geometry::CellGeometry;
use super::vec2::Vec2;
use super::{BilliardError, BilliardState, DiskState};
use crate::scalar::{standard_normal, Real};

/// Default number of whole-configuration attempts before giving up.
pub const DEFAULT_ATTEMPT_BUDGET: usize = 100_000;

/// `m` velocities uniform on the sphere `sum |v_k|^2 = energy`, built from
/// `2m` standard normals rescaled to the required norm.
pub fn sample_cell_velocities<S: Real, R: Rng + ?Sized>(m: usize, energy: S, rng: &mut R) -> Vec<Vec2<S>> {
    let mut v: Vec<Vec2<S>> = (0..m).map(|_| Vec2::new(standard_normal(rng), standard_normal(rng))).collect();
    let norm_sq: S = v.iter().map(|x| x.norm_sq()).sum();
    let scale = if energy > S::zero() && norm_sq > S::zero() { (energy / norm_sq).sqrt() } else { S::zero() };
    for x in &mut v {
        *x = *x * scale;
    }
    v
}

fn uniform_point<S: Real, R: Rng + ?Sized>(geometry: &CellGeometry<S>, cell: usize, rng: &mut R) -> Vec2<S> {
    let (lo, hi) = geometry.bounds(cell);
    let r = geometry.disk_radius;
    loop {
        let ux: f64 = rng.random();
        let uy: f64 = rng.random();
        let p = Vec2::new(lo.x + r + (hi.x - lo.x - r - r) * S::lit(ux), lo.y + r + (hi.y - lo.y - r - r) * S::lit(uy));
        if geometry.admissible(cell, p) {
            return p;
        }
    }
}

fn clear_of<S: Real>(p: Vec2<S>, others: &[Vec2<S>], r: S) -> bool {
    let min_sq = (r + r) * (r + r);
    others.iter().all(|q| (p - *q).norm_sq() > min_sq)
}

/// Positions for the disks of `cell`, uniform on non-overlapping
/// configurations and clear of every disk in `fixed`.
fn sample_cell_positions<S: Real, R: Rng + ?Sized>(
    geometry: &CellGeometry<S>,
    cell: usize,
    fixed: &[Vec2<S>],
    budget: usize,
    rng: &mut R,
) -> Result<Vec<Vec2<S>>, BilliardError> {
    let m = geometry.disks_per_cell;
    let r = geometry.disk_radius;
    let mut placed = Vec::with_capacity(m);
    for _ in 0..budget {
        placed.clear();
        let mut ok = true;
        for _ in 0..m {
            let p = uniform_point(geometry, cell, rng);
            if !clear_of(p, &placed, r) || !clear_of(p, fixed, r) {
                ok = false;
                break;
            }
            placed.push(p);
        }
        if ok {
            return Ok(placed);
        }
    }
    Err(BilliardError::TooTight { cell, attempts: budget })
}

fn check_energy<S: Real>(e: S) -> Result<(), BilliardError> {
    if e >= S::zero() && e.is_finite() {
        Ok(())
    } else {
        Err(BilliardError::InvalidEnergy(e.to_f64_lossy()))
    }
}

/// Draws a state from the conditional Liouville measure: positions uniform
/// on admissible non-overlapping configurations, velocities uniform on each
/// cell's energy sphere.
pub fn sample_conditional_liouville<S: Real, R: Rng + ?Sized>(
    geometry: &CellGeometry<S>,
    cell_energies: &[S],
    rng: &mut R,
) -> Result<BilliardState<S>, BilliardError> {
    sample_with_budget(geometry, cell_energies, DEFAULT_ATTEMPT_BUDGET, rng)
}

pub(crate) fn sample_with_budget<S: Real, R: Rng + ?Sized>(
    geometry: &CellGeometry<S>,
    cell_energies: &[S],
    budget: usize,
    rng: &mut R,
) -> Result<BilliardState<S>, BilliardError> {
    let cells = geometry.cell_count();
    if cell_energies.len() != cells {
        return Err(BilliardError::EnergyCount { expected: cells, found: cell_energies.len() });
    }
    for &e in cell_energies {
        check_energy(e)?;
    }
    let m = geometry.disks_per_cell;
    let mut positions: Vec<Vec2<S>> = Vec::with_capacity(cells * m);
    // Cells are placed in order, conditioning on earlier cells; a cell that
    // cannot be placed restarts the whole configuration so the joint law
    // stays uniform.
    let mut attempts = 0;
    'outer: loop {
        positions.clear();
        for cell in 0..cells {
            attempts += 1;
            if attempts > budget {
                return Err(BilliardError::TooTight { cell, attempts: budget });
            }
            match sample_cell_positions(geometry, cell, &positions, 1, rng) {
                Ok(p) => positions.extend(p),
                Err(_) => continue 'outer,
            }
        }
        break;
    }
    let mut disks = Vec::with_capacity(cells * m);
    for (cell, &e) in cell_energies.iter().enumerate() {
        let v = sample_cell_velocities(m, e, rng);
        for (k, vk) in v.into_iter().enumerate() {
            disks.push(DiskState::new(positions[cell * m + k], vk, cell));
        }
    }
    Ok(BilliardState { disks, time: S::zero() })
}

/// Redraws the positions and velocities of one cell's disks with a new
/// total energy, leaving every other disk untouched.
pub(crate) fn resample_cell<S: Real, R: Rng + ?Sized>(
    geometry: &CellGeometry<S>,
    state: &mut BilliardState<S>,
    cell: usize,
    energy: S,
    budget: usize,
    rng: &mut R,
) -> Result<(), BilliardError> {
    if cell >= geometry.cell_count() {
        return Err(BilliardError::NoSuchCell(cell));
    }
    check_energy(energy)?;
    let fixed: Vec<Vec2<S>> = state.disks.iter().filter(|d| d.cell != cell).map(|d| d.position).collect();
    let positions = sample_cell_positions(geometry, cell, &fixed, budget, rng)?;
    let velocities = sample_cell_velocities(geometry.disks_per_cell, energy, rng);
    for (k, d) in state.disks.iter_mut().filter(|d| d.cell == cell).enumerate() {
        d.position = positions[k];
        d.velocity = velocities[k];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::billiard::geometry::ChainLayout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_disk_speed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut sum_cos = 0.0;
        let n = 20_000;
        for _ in 0..n {
            let v = sample_cell_velocities::<f64, _>(1, 4.0, &mut rng);
            assert!((v[0].norm() - 2.0).abs() < 1e-14);
            sum_cos += v[0].angle().cos();
        }
        assert!((sum_cos / n as f64).abs() < 0.02);
    }

    #[test]
    fn zero_energy_cell_is_at_rest() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = sample_cell_velocities::<f64, _>(3, 0.0, &mut rng);
        assert!(v.iter().all(|x| x.norm_sq() == 0.0));
    }

    #[test]
    fn sampled_state_is_admissible() {
        let g: CellGeometry<f64> = ChainLayout::default().with_disks(4).build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s = sample_conditional_liouville(&g, &[0.3, 0.7], &mut rng).unwrap();
            assert_eq!(s.disks.len(), 8);
            assert!(s.min_pair_gap(g.disk_radius) > 0.0);
            assert!(s.min_wall_gap(&g) > 0.0);
            for d in &s.disks {
                assert!(g.contains(d.cell, d.position));
            }
            assert!((s.cell_energy(0) - 0.3).abs() < 1e-14);
            assert!((s.cell_energy(1) - 0.7).abs() < 1e-14);
        }
    }

    #[test]
    fn errors() {
        let g: CellGeometry<f64> = ChainLayout::default().build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(sample_conditional_liouville(&g, &[1.0], &mut rng), Err(BilliardError::EnergyCount { .. })));
        assert!(matches!(sample_conditional_liouville(&g, &[1.0, -1.0], &mut rng), Err(BilliardError::InvalidEnergy(_))));
        let crowded: CellGeometry<f64> =
            ChainLayout { disk_radius: 0.06, gate_width: 0.11, scatterer_radius: 0.05, ..ChainLayout::default() }
                .with_disks(12)
                .build()
                .unwrap();
        assert!(matches!(sample_with_budget(&crowded, &[1.0, 1.0], 50, &mut rng), Err(BilliardError::TooTight { .. })));
    }

    #[test]
    fn resample_leaves_other_cells() {
        let g: CellGeometry<f64> = ChainLayout::default().build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = sample_conditional_liouville(&g, &[0.5, 0.5], &mut rng).unwrap();
        let before = s.clone();
        resample_cell(&g, &mut s, 1, 2.0, 1000, &mut rng).unwrap();
        assert_eq!(&s.disks[..3], &before.disks[..3]);
        assert!((s.cell_energy(1) - 2.0).abs() < 1e-14);
        assert!(s.min_pair_gap(g.disk_radius) > 0.0);
    }
}
