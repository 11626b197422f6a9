use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point;

use super::grid::{step_spring_system_mut, ControlGrid};
use super::tps::{fit_tps, TpsWarp};

/// A transient contraction (`direction = -1`) or elongation (`+1`) of a random
/// subset of control points toward / away from their barycenter.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceEvent {
    pub subset: Vec<usize>,
    pub direction: f64,
    /// Pixels/frame², one per entry of `subset`.
    pub amplitudes: Vec<f64>,
    pub start_frame: usize,
    pub duration: usize,
}

impl ForceEvent {
    pub fn is_active(&self, frame: usize) -> bool {
        frame >= self.start_frame && frame < self.start_frame + self.duration
    }

    pub fn barycenter(&self, positions: &[Point]) -> Point {
        let sum: Point = self.subset.iter().map(|&i| positions[i]).sum();
        sum / self.subset.len() as f64
    }

    /// Per-point forces on the current positions. Points outside the subset get
    /// no entry (zero force).
    pub fn forces(&self, positions: &[Point]) -> Result<Vec<(usize, Point)>> {
        if let Some(&bad) = self.subset.iter().find(|&&i| i >= positions.len()) {
            return Err(Error::param(format!("event references missing point {bad}")));
        }
        let center = self.barycenter(positions);
        Ok(self
            .subset
            .iter()
            .zip(&self.amplitudes)
            .map(|(&i, &amp)| {
                let offset = positions[i] - center;
                let len = offset.norm();
                let f = if len > 0.0 {
                    self.direction * amp / len * offset
                } else {
                    Point::zeros()
                };
                (i, f)
            })
            .collect())
    }
}

/// Draw one random force event starting at `frame`.
///
/// Subset size is uniform on `{2, ..., min(m, n)}`, the subset uniform without
/// replacement, direction uniform on `{-1, +1}` and amplitudes i.i.d. uniform
/// on `[a_max/2, a_max]`.
pub fn sample_force_event<R: Rng + ?Sized>(
    rng: &mut R,
    grid: &ControlGrid,
    a_max: f64,
    m: usize,
    duration: usize,
    frame: usize,
) -> Result<ForceEvent> {
    let n = grid.len();
    if n < 2 {
        return Err(Error::param(format!("force events need >= 2 control points, grid has {n}")));
    }
    if m < 2 {
        return Err(Error::param(format!("m must be >= 2, got {m}")));
    }
    if !(a_max > 0.0) {
        return Err(Error::param(format!("a_max must be positive, got {a_max}")));
    }
    if duration == 0 {
        return Err(Error::param("event duration must be >= 1 frame"));
    }
    let size = rng.random_range(2..=m.min(n));
    let mut subset = index::sample(rng, n, size).into_vec();
    subset.sort_unstable();
    let direction = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let amplitudes = (0..size)
        .map(|_| rng.random_range(0.5 * a_max..=a_max))
        .collect();
    Ok(ForceEvent {
        subset,
        direction,
        amplitudes,
        start_frame: frame,
        duration,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpringMotionParams {
    /// Pixels/frame².
    pub a_max: f64,
    /// Lattice pitch in pixels.
    pub spacing: f64,
    /// Probability of starting a new event on a given frame.
    pub p_event: f64,
    /// Frames.
    pub duration: usize,
    /// Maximum number of control points in one event.
    pub m: usize,
}

impl Default for SpringMotionParams {
    fn default() -> Self {
        Self {
            a_max: 4.0,
            spacing: 50.0,
            p_event: 0.25,
            duration: 3,
            m: 10,
        }
    }
}

impl SpringMotionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_max >= 0.0) {
            return Err(Error::param("a_max must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.p_event) {
            return Err(Error::param("p_event must lie in [0, 1]"));
        }
        if self.duration == 0 {
            return Err(Error::param("duration must be >= 1"));
        }
        if self.m < 2 {
            return Err(Error::param("m must be >= 2"));
        }
        if !(self.spacing >= 2.0) {
            return Err(Error::param("spacing must be >= 2"));
        }
        Ok(())
    }
}

/// A control grid together with its random event schedule.
#[derive(Debug, Clone)]
pub struct SpringMotion {
    pub grid: ControlGrid,
    pub params: SpringMotionParams,
    events: Vec<ForceEvent>,
}

impl SpringMotion {
    pub fn new(grid: ControlGrid, params: SpringMotionParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            grid,
            params,
            events: Vec::new(),
        })
    }

    /// Events still active at the last advanced frame.
    pub fn events(&self) -> &[ForceEvent] {
        &self.events
    }

    /// Advance to `frame`: possibly start a new event, then integrate one step.
    pub fn advance<R: Rng + ?Sized>(&mut self, frame: usize, dt: f64, rng: &mut R) -> Result<()> {
        self.events.retain(|e| e.is_active(frame));
        let p = &self.params;
        if self.grid.len() >= 2 && p.a_max > 0.0 && rng.random_bool(p.p_event) {
            let event = sample_force_event(rng, &self.grid, p.a_max, p.m, p.duration, frame)?;
            self.events.push(event);
        }
        step_spring_system_mut(&mut self.grid, &self.events, dt)
    }

    /// Interpolating warp from the initial to the current control positions.
    pub fn warp(&self) -> Result<TpsWarp> {
        fit_tps(
            self.grid.dim(),
            self.grid.initial_positions(),
            &self.grid.positions,
            0.0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{build_control_grid, spring_force, step_spring_system};
    use crate::rng;
    use crate::scene::AnimalMask;

    fn grid(dims: &[usize], spacing: f64) -> ControlGrid {
        build_control_grid(&AnimalMask::full(dims).unwrap(), spacing, 10.0).unwrap()
    }

    #[test]
    fn event_sampling_ranges() {
        let g = grid(&[200, 200], 20.0);
        let mut rng = rng::stream(3, "events", 0);
        let mut sizes = std::collections::BTreeSet::new();
        let mut dirs = std::collections::BTreeSet::new();
        for f in 0..2000 {
            let e = sample_force_event(&mut rng, &g, 4.0, 10, 3, f).unwrap();
            assert!((2..=10).contains(&e.subset.len()));
            assert_eq!(e.subset.len(), e.amplitudes.len());
            assert!(e.amplitudes.iter().all(|a| (2.0..=4.0).contains(a)));
            let mut s = e.subset.clone();
            s.dedup();
            assert_eq!(s.len(), e.subset.len());
            sizes.insert(e.subset.len());
            dirs.insert(e.direction as i64);
            let forces = e.forces(&g.positions).unwrap();
            let active: Vec<usize> = forces.iter().map(|(i, _)| *i).collect();
            for i in 0..g.len() {
                if !e.subset.contains(&i) {
                    assert!(!active.contains(&i));
                }
            }
        }
        assert_eq!(sizes.len(), 9);
        assert_eq!(dirs.len(), 2);
    }

    #[test]
    fn subset_capped_by_grid_size() {
        let g = grid(&[40, 40], 20.0);
        assert!(g.len() < 10);
        let mut rng = rng::stream(4, "events", 0);
        for f in 0..200 {
            let e = sample_force_event(&mut rng, &g, 1.0, 10, 1, f).unwrap();
            assert!(e.subset.len() <= g.len());
        }
        let lone = build_control_grid(
            &AnimalMask::from_fn(&[50, 50], |c| c[0] == 3 && c[1] == 3).unwrap(),
            10.0,
            10.0,
        )
        .unwrap();
        assert!(sample_force_event(&mut rng, &lone, 1.0, 10, 1, 0).is_err());
    }

    #[test]
    fn contraction_points_inward() {
        let g = grid(&[200, 200], 20.0);
        let mut rng = rng::stream(5, "events", 0);
        let mut checked = 0;
        while checked < 50 {
            let e = sample_force_event(&mut rng, &g, 4.0, 10, 3, 0).unwrap();
            if e.direction > 0.0 {
                continue;
            }
            let c = e.barycenter(&g.positions);
            for (i, f) in e.forces(&g.positions).unwrap() {
                assert!(f.dot(&(g.positions[i] - c)) < 0.0);
            }
            checked += 1;
        }
    }

    #[test]
    fn two_point_contraction_moves_toward_barycenter() {
        let g = grid(&[200, 200], 20.0);
        let event = ForceEvent {
            subset: vec![12, 40],
            direction: -1.0,
            amplitudes: vec![3.0, 3.0],
            start_frame: 0,
            duration: 3,
        };
        let center = event.barycenter(&g.positions);
        let d0: Vec<f64> = event.subset.iter().map(|&i| (g.positions[i] - center).norm()).collect();
        let mut cur = g.clone();
        for frame in 0..6 {
            let active: Vec<ForceEvent> =
                std::iter::once(event.clone()).filter(|e| e.is_active(frame)).collect();
            cur = step_spring_system(&cur, &active, 1.0).unwrap();
            for (k, &i) in event.subset.iter().enumerate() {
                assert!((cur.positions[i] - center).norm() < d0[k]);
            }
        }
    }

    #[test]
    fn springs_conserve_momentum() {
        let mut g = grid(&[120, 120], 20.0);
        let mut rng = rng::stream(9, "events", 0);
        let e = sample_force_event(&mut rng, &g, 4.0, 10, 5, 0).unwrap();
        for _ in 0..5 {
            g = step_spring_system(&g, std::slice::from_ref(&e), 1.0).unwrap();
            let total: Point = (0..g.len()).map(|i| spring_force(&g, i).unwrap()).sum();
            assert!(total.norm() < 1e-12, "{total}");
        }
    }

    #[test]
    fn kinetic_energy_relaxes_after_events() {
        let params = SpringMotionParams {
            a_max: 4.0,
            spacing: 20.0,
            p_event: 0.5,
            duration: 3,
            m: 10,
        };
        let mut motion = SpringMotion::new(grid(&[200, 200], 20.0), params).unwrap();
        let mut rng = rng::stream(21, "events", 0);
        for frame in 1..=40 {
            motion.advance(frame, 1.0, &mut rng).unwrap();
        }
        // Let the remaining events run out without scheduling new ones.
        motion.params.p_event = 0.0;
        let mut frame = 41;
        while !motion.events().is_empty() || frame == 41 {
            motion.advance(frame, 1.0, &mut rng).unwrap();
            frame += 1;
        }
        let mut peak = motion.grid.kinetic_energy();
        let mut ke = Vec::new();
        for _ in 0..50 {
            motion.advance(frame, 1.0, &mut rng).unwrap();
            frame += 1;
            ke.push(motion.grid.kinetic_energy());
        }
        peak = ke.iter().copied().fold(peak, f64::max);
        assert!(peak > 0.0);
        assert!(*ke.last().unwrap() < 0.01 * peak, "{:?}", (peak, ke.last()));
    }

    #[test]
    fn schedule_is_deterministic() {
        let run = || {
            let mut m =
                SpringMotion::new(grid(&[150, 150], 25.0), SpringMotionParams::default()).unwrap();
            let mut rng = rng::stream(77, "motion", 0);
            for f in 1..30 {
                m.advance(f, 1.0, &mut rng).unwrap();
            }
            m.grid.positions
        };
        assert_eq!(run(), run());
    }
}
