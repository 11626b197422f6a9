//! Animal mask, particle/background placement and per-frame profile evolution.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{calibrate_force_std, OscillatorState};
use crate::error::{Error, Result};
use crate::motion::{advect_with_flow, apply_tps, FlowField, TpsWarp};
use crate::shape::GridShape;
use crate::Point;

/// Floor on the normalized size so covariances stay positive definite.
pub const MIN_NORMALIZED_SIZE: f64 = 0.1;

/// Voxels of the simulated body at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AnimalMask {
    shape: GridShape,
    data: Vec<bool>,
}

impl AnimalMask {
    pub fn new(shape: GridShape, data: Vec<bool>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} voxels", shape.len()),
                got: data.len().to_string(),
            });
        }
        if !data.iter().any(|&b| b) {
            return Err(Error::EmptyMask("mask has no true voxel".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(dims: &[usize], f: impl Fn([usize; 3]) -> bool) -> Result<Self> {
        let shape = GridShape::new(dims)?;
        let data = (0..shape.len()).map(|i| f(shape.coords(i))).collect();
        Self::new(shape, data)
    }

    pub fn full(dims: &[usize]) -> Result<Self> {
        Self::from_fn(dims, |_| true)
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn ndim(&self) -> usize {
        self.shape.ndim()
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn coverage(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    pub fn true_voxels(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| self.shape.coords(i))
    }

    /// Whether the voxel nearest to `p` belongs to the mask.
    pub fn contains(&self, p: &Point) -> bool {
        let mut c = [0usize; 3];
        for (a, &d) in self.dims().iter().enumerate() {
            let r = p[a].round();
            if r < 0.0 || r >= d as f64 {
                return false;
            }
            c[a] = r as usize;
        }
        self.data[self.shape.index(&c[..self.ndim()])]
    }
}

/// Random axis-aligned ellipse (ellipsoid) covering `coverage` of the domain.
pub fn sample_ellipse_mask<R: Rng + ?Sized>(
    dims: &[usize],
    coverage: f64,
    rng: &mut R,
) -> Result<AnimalMask> {
    let shape = GridShape::new(dims)?;
    if !(coverage > 0.0 && coverage <= 0.9) {
        return Err(Error::param(format!("coverage must lie in (0, 0.9], got {coverage}")));
    }
    let d = dims.len();
    let unit_volume = if d == 2 { PI } else { 4.0 / 3.0 * PI };
    let domain: f64 = dims.iter().map(|&s| s as f64).product();
    for _ in 0..200 {
        let mut semi = [0.0f64; 3];
        for a in 0..d {
            semi[a] = rng.random_range(0.6..=1.0) * dims[a] as f64 / 2.0;
        }
        let vol: f64 = unit_volume * semi[..d].iter().product::<f64>();
        let scale = (coverage * domain / vol).powf(1.0 / d as f64);
        if scale > 1.0 {
            continue;
        }
        let mut center = [0.0f64; 3];
        for a in 0..d {
            semi[a] *= scale;
            let lo = semi[a] - 0.5;
            let hi = dims[a] as f64 - 0.5 - semi[a];
            center[a] = if hi > lo { rng.random_range(lo..=hi) } else { (dims[a] as f64 - 1.0) / 2.0 };
        }
        let data: Vec<bool> = (0..shape.len())
            .map(|i| {
                let c = shape.coords(i);
                (0..d)
                    .map(|a| ((c[a] as f64 - center[a]) / semi[a]).powi(2))
                    .sum::<f64>()
                    <= 1.0
            })
            .collect();
        let frac = data.iter().filter(|&&b| b).count() as f64 / shape.len() as f64;
        if (frac - coverage).abs() <= 0.1 * coverage {
            return AnimalMask::new(shape, data);
        }
    }
    Err(Error::param(format!(
        "coverage {coverage} is infeasible for an ellipse inside {dims:?}"
    )))
}

/// Threshold a scalar image: voxels with value `>= threshold` belong to the body.
pub fn load_mask(shape: &GridShape, image: &[f64], threshold: f64) -> Result<AnimalMask> {
    if image.is_empty() {
        return Err(Error::param("mask image is empty"));
    }
    let data: Vec<bool> = image.iter().map(|&v| v >= threshold).collect();
    if !data.iter().any(|&b| b) {
        return Err(Error::EmptyMask(format!("no voxel reaches threshold {threshold}")));
    }
    AnimalMask::new(shape.clone(), data)
}

/// Uniform positions in `mask` with pairwise distance `>= min_dist`, by dart
/// throwing with `max_attempts` tries per point.
pub fn sample_positions<R: Rng + ?Sized>(
    mask: &AnimalMask,
    count: usize,
    min_dist: f64,
    rng: &mut R,
    max_attempts: usize,
) -> Result<Vec<Point>> {
    if count == 0 {
        return Err(Error::param("count must be >= 1"));
    }
    if !(min_dist >= 0.0) {
        return Err(Error::param("min_dist must be non-negative"));
    }
    let d = mask.ndim();
    let voxels: Vec<[usize; 3]> = mask.true_voxels().collect();
    let cell = if min_dist > 0.0 { min_dist } else { 1.0 };
    let key = |p: &Point| -> [i64; 3] {
        let mut k = [0i64; 3];
        for a in 0..d {
            k[a] = (p[a] / cell).floor() as i64;
        }
        k
    };
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut placed: Vec<Point> = Vec::with_capacity(count);
    let zr: i64 = if d == 3 { 1 } else { 0 };

    for _ in 0..count {
        let mut accepted = None;
        for _ in 0..max_attempts.max(1) {
            let v = voxels[rng.random_range(0..voxels.len())];
            let mut p = Point::zeros();
            for a in 0..d {
                // Half-open jitter keeps the nearest voxel equal to `v`.
                p[a] = v[a] as f64 + rng.random_range(-0.5..0.5);
            }
            if min_dist > 0.0 {
                let k = key(&p);
                let mut ok = true;
                'scan: for dz in -zr..=zr {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            if let Some(ids) = buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                                if ids.iter().any(|&j| (placed[j] - p).norm() < min_dist) {
                                    ok = false;
                                    break 'scan;
                                }
                            }
                        }
                    }
                }
                if !ok {
                    continue;
                }
            }
            accepted = Some(p);
            break;
        }
        match accepted {
            Some(p) => {
                buckets.entry(key(&p)).or_default().push(placed.len());
                placed.push(p);
            }
            None => {
                return Err(Error::Packing {
                    placed: placed.len(),
                    requested: count,
                    min_dist,
                })
            }
        }
    }
    Ok(placed)
}

/// `Σ = Rᵀ · diag(sizes)² · R`, with `R = R_z · R_y · R_x` in 3D.
pub fn covariance_of(sizes: &[f64], angles: &[f64]) -> Result<DMatrix<f64>> {
    if let Some(bad) = sizes.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::param(format!("sizes must be positive, got {bad}")));
    }
    let r = rotation(sizes.len(), angles)?;
    let d2 = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        sizes.len(),
        sizes.iter().map(|s| s * s),
    ));
    let sigma = r.transpose() * d2 * &r;
    // Exact symmetry regardless of rounding in the product.
    Ok((&sigma + sigma.transpose()) * 0.5)
}

fn rotation(dim: usize, angles: &[f64]) -> Result<DMatrix<f64>> {
    match (dim, angles.len()) {
        (2, 1) => {
            let (s, c) = angles[0].sin_cos();
            Ok(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]))
        }
        (3, 3) => {
            let (sx, cx) = angles[0].sin_cos();
            let (sy, cy) = angles[1].sin_cos();
            let (sz, cz) = angles[2].sin_cos();
            let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
            let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
            let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
            let r = rz * ry * rx;
            Ok(DMatrix::from_iterator(3, 3, r.iter().copied()))
        }
        _ => Err(Error::DimensionMismatch {
            expected: if dim == 2 { "1 angle".into() } else { "3 angles".into() },
            got: angles.len().to_string(),
        }),
    }
}

/// One Gaussian profile (particle or background blob).
#[derive(Debug, Clone, PartialEq)]
pub struct SceneProfile {
    pub position: Point,
    pub weight: f64,
    /// Sizes at t = 0, in pixels.
    pub base_sizes: Vec<f64>,
    /// Normalized size `σ_t / σ_0`, equilibrium 1.
    pub size_osc: OscillatorState,
    /// Rotation angles in radians.
    pub angle_osc: OscillatorState,
}

impl SceneProfile {
    /// Current per-axis sizes in pixels.
    pub fn sizes(&self) -> Vec<f64> {
        self.base_sizes
            .iter()
            .zip(&self.size_osc.value)
            .map(|(b, s)| b * s.max(MIN_NORMALIZED_SIZE))
            .collect()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angle_osc.value
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        covariance_of(&self.sizes(), self.angles())
    }
}

/// Hook for time-varying intensity weights. Only constant weights are used by
/// the shipped scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntensityModel {
    Constant { weight: f64 },
}

impl Default for IntensityModel {
    fn default() -> Self {
        IntensityModel::Constant { weight: 1.0 }
    }
}

impl IntensityModel {
    pub fn weight(&self, _particle: usize, _frame: usize) -> f64 {
        match *self {
            IntensityModel::Constant { weight } => weight.clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneParams {
    pub particles: usize,
    pub min_dist: f64,
    pub max_attempts: usize,
    pub particle_size: (f64, f64),
    pub background_size: (f64, f64),
    /// Mask voxels per background blob; `None` means `40^d`.
    pub background_voxels_per_blob: Option<f64>,
    pub size_std: f64,
    pub angle_std: f64,
    pub intensity: IntensityModel,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            particles: 800,
            min_dist: 6.0,
            max_attempts: 1000,
            particle_size: (1.0, 3.0),
            background_size: (20.0, 60.0),
            background_voxels_per_blob: None,
            size_std: 0.05,
            angle_std: PI / 30.0,
            intensity: IntensityModel::default(),
        }
    }
}

/// How positions move between two frames.
#[derive(Debug, Clone, Copy)]
pub enum Deformation<'a> {
    Identity,
    /// Warp evaluated on the t = 0 positions.
    Warp(&'a TpsWarp),
    /// Incremental displacement of the current positions.
    Flow(&'a FlowField),
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub particles: Vec<SceneProfile>,
    pub background: Vec<SceneProfile>,
    pub mask: AnimalMask,
    pub initial_particle_positions: Vec<Point>,
    pub initial_background_positions: Vec<Point>,
    /// Calibrated force standard deviations; set to 0 to freeze shapes.
    pub size_force_std: f64,
    pub angle_force_std: f64,
    pub intensity: IntensityModel,
    pub tau: f64,
}

impl Scene {
    pub fn dim(&self) -> usize {
        self.mask.ndim()
    }
}

fn sample_profile<R: Rng + ?Sized>(
    rng: &mut R,
    position: Point,
    dim: usize,
    size_range: (f64, f64),
    weight: f64,
    tau: f64,
) -> Result<SceneProfile> {
    let base_sizes = (0..dim)
        .map(|_| rng.random_range(size_range.0..=size_range.1))
        .collect();
    let n_angles = if dim == 2 { 1 } else { 3 };
    let angles: Vec<f64> = (0..n_angles).map(|_| rng.random_range(0.0..PI)).collect();
    Ok(SceneProfile {
        position,
        weight,
        base_sizes,
        size_osc: OscillatorState::at_rest(vec![1.0; dim], tau)?,
        angle_osc: OscillatorState::at_rest(angles, tau)?,
    })
}

/// Place particles and background blobs in `mask` and initialise their shapes.
pub fn init_scene<R: Rng + ?Sized>(
    mask: AnimalMask,
    params: &SceneParams,
    tau: f64,
    rng: &mut R,
) -> Result<Scene> {
    let dim = mask.ndim();
    let (lo, hi) = params.particle_size;
    let (blo, bhi) = params.background_size;
    if !(lo > 0.0 && hi >= lo && blo > 0.0 && bhi >= blo) {
        return Err(Error::param("size ranges must be positive and ordered"));
    }
    let positions = sample_positions(&mask, params.particles, params.min_dist, rng, params.max_attempts)?;
    let per_blob = params
        .background_voxels_per_blob
        .unwrap_or_else(|| 40f64.powi(dim as i32));
    let n_background = ((mask.count() as f64 / per_blob).round() as usize).max(1);
    let background_positions = sample_positions(&mask, n_background, 0.0, rng, 1)?;

    let w0 = params.intensity.weight(0, 0);
    let particles = positions
        .iter()
        .map(|p| sample_profile(rng, *p, dim, params.particle_size, w0, tau))
        .collect::<Result<Vec<_>>>()?;
    let background = background_positions
        .iter()
        .map(|p| sample_profile(rng, *p, dim, params.background_size, 1.0, tau))
        .collect::<Result<Vec<_>>>()?;

    Ok(Scene {
        particles,
        background,
        initial_particle_positions: positions,
        initial_background_positions: background_positions,
        size_force_std: calibrate_force_std(params.size_std, tau, 1.0)?,
        angle_force_std: calibrate_force_std(params.angle_std, tau, 1.0)?,
        intensity: params.intensity,
        tau,
        mask,
    })
}

/// Move every profile with `deformation` and step its shape oscillators once.
pub fn step_scene<R: Rng + ?Sized>(
    scene: &mut Scene,
    deformation: Deformation<'_>,
    frame: usize,
    dt: f64,
    rng: &mut R,
) -> Result<()> {
    let dim = scene.dim();
    let check = |d: usize| {
        if d != dim {
            Err(Error::DimensionMismatch {
                expected: format!("{dim}D deformation"),
                got: format!("{d}D"),
            })
        } else {
            Ok(())
        }
    };
    match deformation {
        Deformation::Identity => {}
        Deformation::Warp(w) => {
            check(w.dim())?;
            let p = apply_tps(w, &scene.initial_particle_positions);
            let b = apply_tps(w, &scene.initial_background_positions);
            assign_positions(&mut scene.particles, &p);
            assign_positions(&mut scene.background, &b);
        }
        Deformation::Flow(f) => {
            check(f.shape().ndim())?;
            if f.shape().dims() != scene.mask.dims() {
                return Err(Error::DimensionMismatch {
                    expected: format!("flow grid {:?}", scene.mask.dims()),
                    got: format!("{:?}", f.shape().dims()),
                });
            }
            let cur: Vec<Point> = scene.particles.iter().map(|p| p.position).collect();
            let curb: Vec<Point> = scene.background.iter().map(|p| p.position).collect();
            assign_positions(&mut scene.particles, &advect_with_flow(f, &cur));
            assign_positions(&mut scene.background, &advect_with_flow(f, &curb));
        }
    }
    let (size_std, angle_std) = (scene.size_force_std, scene.angle_force_std);
    for (i, p) in scene.particles.iter_mut().enumerate() {
        p.size_osc.step_random(size_std, dt, rng)?;
        p.angle_osc.step_random(angle_std, dt, rng)?;
        p.weight = scene.intensity.weight(i, frame);
    }
    for p in scene.background.iter_mut() {
        p.size_osc.step_random(size_std, dt, rng)?;
        p.angle_osc.step_random(angle_std, dt, rng)?;
    }
    Ok(())
}

fn assign_positions(profiles: &mut [SceneProfile], positions: &[Point]) {
    for (p, x) in profiles.iter_mut().zip(positions) {
        p.position = *x;
    }
}
