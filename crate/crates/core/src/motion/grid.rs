use std::collections::{HashMap, HashSet};

use crate::dynamics::critical_params;
use crate::error::{Error, Result};
use crate::scene::AnimalMask;
use crate::Point;

use super::events::ForceEvent;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spring {
    pub a: usize,
    pub b: usize,
    /// 1/frame².
    pub stiffness: f64,
    /// Pixels.
    pub eq_length: f64,
}

/// Lattice of unit-mass control points joined by damped springs.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    dim: usize,
    pub positions: Vec<Point>,
    pub velocities: Vec<Point>,
    initial_positions: Vec<Point>,
    springs: Vec<Spring>,
    /// Per point: `(neighbor, spring index)`.
    neighbors: Vec<Vec<(usize, usize)>>,
    tau: f64,
}

impl ControlGrid {
    /// Build a grid from explicit points and springs.
    ///
    /// Equilibrium lengths are taken from the given positions and every spring
    /// gets stiffness `1/tau²`.
    pub fn from_points(
        dim: usize,
        positions: Vec<Point>,
        edges: &[(usize, usize)],
        tau: f64,
    ) -> Result<Self> {
        let (_, k) = critical_params(tau)?;
        let n = positions.len();
        let mut springs = Vec::with_capacity(edges.len());
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::param(format!("invalid spring ({a}, {b}) for {n} points")));
            }
            let eq_length = (positions[a] - positions[b]).norm();
            if eq_length == 0.0 {
                return Err(Error::CoincidentPoints(a, b));
            }
            let s = springs.len();
            springs.push(Spring {
                a,
                b,
                stiffness: k,
                eq_length,
            });
            neighbors[a].push((b, s));
            neighbors[b].push((a, s));
        }
        Ok(Self {
            dim,
            velocities: vec![Point::zeros(); n],
            initial_positions: positions.clone(),
            positions,
            springs,
            neighbors,
            tau,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn damping(&self) -> f64 {
        2.0 / self.tau
    }

    pub fn initial_positions(&self) -> &[Point] {
        &self.initial_positions
    }

    pub fn springs(&self) -> &[Spring] {
        &self.springs
    }

    /// `(neighbor, spring index)` pairs of point `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.neighbors[i]
    }

    /// Stiffness between `i` and `j` (0 when not connected).
    pub fn stiffness(&self, i: usize, j: usize) -> f64 {
        self.neighbors[i]
            .iter()
            .find(|(n, _)| *n == j)
            .map_or(0.0, |&(_, s)| self.springs[s].stiffness)
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.velocities.iter().map(|v| 0.5 * v.norm_squared()).sum()
    }

    /// Force exerted on `i` by the spring shared with `j`.
    fn pair_force(&self, i: usize, j: usize, spring: &Spring) -> Result<Point> {
        let delta = self.positions[i] - self.positions[j];
        let len = delta.norm();
        if len == 0.0 {
            return Err(Error::CoincidentPoints(i.min(j), i.max(j)));
        }
        Ok(-spring.stiffness * (len - spring.eq_length) / len * delta)
    }
}

/// Lattice of control points covering `mask` at pitch `spacing`.
///
/// Lattice nodes sit at `mask_min + i * spacing`; a node is kept when at least
/// one mask voxel is closer to it than to any other node (its cell intersects
/// the mask). Nodes are connected to their 8 (2D) or 26 (3D) lattice neighbors.
pub fn build_control_grid(mask: &AnimalMask, spacing: f64, tau: f64) -> Result<ControlGrid> {
    critical_params(tau)?;
    if !(spacing >= 2.0) {
        return Err(Error::param(format!("spacing must be >= 2 pixels, got {spacing}")));
    }
    let shape = mask.shape();
    let largest = *shape.dims().iter().max().unwrap_or(&0) as f64;
    if spacing > largest {
        return Err(Error::param(format!(
            "spacing {spacing} exceeds the mask extent {largest}"
        )));
    }
    let dim = shape.ndim();
    let voxels: Vec<[usize; 3]> = mask.true_voxels().collect();
    if voxels.is_empty() {
        return Err(Error::EmptyMask("cannot build a control grid".into()));
    }
    let mut origin = [usize::MAX; 3];
    for v in &voxels {
        for a in 0..dim {
            origin[a] = origin[a].min(v[a]);
        }
    }

    let mut cells: Vec<[i64; 3]> = Vec::new();
    let mut seen: HashSet<[i64; 3]> = HashSet::new();
    for v in &voxels {
        let mut cell = [0i64; 3];
        for a in 0..dim {
            cell[a] = ((v[a] - origin[a]) as f64 / spacing).round() as i64;
        }
        if seen.insert(cell) {
            cells.push(cell);
        }
    }
    // Canonical ordering: z, then y, then x.
    cells.sort_by(|p, q| (p[2], p[1], p[0]).cmp(&(q[2], q[1], q[0])));
    let index: HashMap<[i64; 3], usize> =
        cells.iter().enumerate().map(|(i, c)| (*c, i)).collect();

    let positions: Vec<Point> = cells
        .iter()
        .map(|c| {
            let mut p = Point::zeros();
            for a in 0..dim {
                p[a] = origin[a] as f64 + c[a] as f64 * spacing;
            }
            p
        })
        .collect();

    let zr: i64 = if dim == 3 { 1 } else { 0 };
    let mut edges = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        for dz in -zr..=zr {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let n = [c[0] + dx, c[1] + dy, c[2] + dz];
                    if let Some(&j) = index.get(&n) {
                        if i < j {
                            edges.push((i, j));
                        }
                    }
                }
            }
        }
    }
    ControlGrid::from_points(dim, positions, &edges, tau)
}

/// Net spring force on control point `i`.
pub fn spring_force(grid: &ControlGrid, i: usize) -> Result<Point> {
    if i >= grid.len() {
        return Err(Error::param(format!("control point {i} out of range")));
    }
    let mut f = Point::zeros();
    for &(j, s) in &grid.neighbors[i] {
        f += grid.pair_force(i, j, &grid.springs[s])?;
    }
    Ok(f)
}

/// Advance every control point by one semi-implicit Euler step.
///
/// Forces of all `active_events` are evaluated on the current positions and
/// added per point.
pub fn step_spring_system(
    grid: &ControlGrid,
    active_events: &[ForceEvent],
    dt: f64,
) -> Result<ControlGrid> {
    let mut next = grid.clone();
    step_spring_system_mut(&mut next, active_events, dt)?;
    Ok(next)
}

pub(crate) fn step_spring_system_mut(
    grid: &mut ControlGrid,
    active_events: &[ForceEvent],
    dt: f64,
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::param(format!("dt must be positive, got {dt}")));
    }
    let n = grid.len();
    let mut accel = vec![Point::zeros(); n];
    for s in &grid.springs {
        let f = grid.pair_force(s.a, s.b, s)?;
        accel[s.a] += f;
        accel[s.b] -= f;
    }
    for event in active_events {
        for (i, f) in event.forces(&grid.positions)? {
            accel[i] += f;
        }
    }
    let lambda = grid.damping();
    for i in 0..n {
        let a = accel[i] - lambda * grid.velocities[i];
        grid.velocities[i] += dt * a;
        grid.positions[i] += dt * grid.velocities[i];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_mask(dims: &[usize]) -> AnimalMask {
        AnimalMask::full(dims).unwrap()
    }

    #[test]
    fn full_square_mask_gives_five_by_five() {
        let g = build_control_grid(&full_mask(&[100, 100]), 25.0, 10.0).unwrap();
        assert_eq!(g.len(), 25);
        // 5x5 king-move lattice: 2*5*4 axial + 2*4*4 diagonal.
        assert_eq!(g.springs().len(), 72);
        let center = g
            .positions
            .iter()
            .position(|p| (p - Point::new(50.0, 50.0, 0.0)).norm() < 1e-12)
            .unwrap();
        assert_eq!(g.neighbors(center).len(), 8);
    }

    #[test]
    fn lattice_invariants() {
        let g = build_control_grid(&full_mask(&[60, 45, 30]), 10.0, 10.0).unwrap();
        let interior = g.neighbors.iter().filter(|n| n.len() == 26).count();
        assert!(interior > 0);
        for i in 0..g.len() {
            for &(j, s) in g.neighbors(i) {
                assert_eq!(g.stiffness(i, j), g.stiffness(j, i));
                let sp = g.springs()[s];
                let d = (g.initial_positions()[i] - g.initial_positions()[j]).norm();
                assert!((sp.eq_length - d).abs() < 1e-12);
                assert_eq!(sp.stiffness, 0.01);
            }
        }
        assert_eq!(g.stiffness(0, g.len() - 1), 0.0);
    }

    #[test]
    fn single_voxel_mask_has_one_point() {
        let mask = AnimalMask::from_fn(&[100, 100], |c| c[0] == 40 && c[1] == 60).unwrap();
        let g = build_control_grid(&mask, 25.0, 10.0).unwrap();
        assert_eq!(g.len(), 1);
        assert!(g.springs().is_empty());
    }

    #[test]
    fn diagonal_length_is_spacing_sqrt2() {
        let g = build_control_grid(&full_mask(&[100, 100]), 25.0, 10.0).unwrap();
        let diag = g
            .springs()
            .iter()
            .map(|s| s.eq_length)
            .fold(0.0f64, f64::max);
        assert!((diag - 25.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn grid_errors() {
        let m = full_mask(&[100, 100]);
        assert!(build_control_grid(&m, 1.0, 10.0).is_err());
        assert!(build_control_grid(&m, 101.0, 10.0).is_err());
        assert!(build_control_grid(&m, 10.0, 0.0).is_err());
    }

    #[test]
    fn rest_state_has_no_force() {
        let g = build_control_grid(&full_mask(&[80, 80]), 20.0, 10.0).unwrap();
        for i in 0..g.len() {
            assert_eq!(spring_force(&g, i).unwrap(), Point::zeros());
        }
        assert_eq!(step_spring_system(&g, &[], 1.0).unwrap(), g);
    }

    #[test]
    fn stretched_pair_pulls_together() {
        let k = 0.01;
        let mut g = ControlGrid::from_points(
            2,
            vec![Point::new(0.0, 0.0, 0.0), Point::new(5.0, 0.0, 0.0)],
            &[(0, 1)],
            10.0,
        )
        .unwrap();
        let delta = 0.7;
        g.positions[1].x += delta;
        let f0 = spring_force(&g, 0).unwrap();
        let f1 = spring_force(&g, 1).unwrap();
        assert!((f0.x - k * delta).abs() < 1e-15);
        assert!((f1.x + k * delta).abs() < 1e-15);
        assert_eq!(f0 + f1, Point::zeros());
    }

    #[test]
    fn coincident_points_error() {
        let mut g = ControlGrid::from_points(
            2,
            vec![Point::new(0.0, 0.0, 0.0), Point::new(5.0, 0.0, 0.0)],
            &[(0, 1)],
            10.0,
        )
        .unwrap();
        g.positions[1] = g.positions[0];
        assert!(matches!(spring_force(&g, 0), Err(Error::CoincidentPoints(0, 1))));
        assert!(step_spring_system(&g, &[], 1.0).is_err());
    }
}
