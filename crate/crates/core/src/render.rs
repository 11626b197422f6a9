//! Image formation: Gaussian profile rendering, background gain, particle /
//! background mixing, Poisson shot noise and 16-bit quantization.

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{counter_stream, SimRng};
use crate::scene::SceneProfile;
use crate::shape::GridShape;

/// Default half-width of the rendered support, in multiples of the largest size.
pub const DEFAULT_TRUNCATION: f64 = 4.0;

/// Normalized intensities on a 2D/3D grid (1.0 is nominal full scale).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    shape: GridShape,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn zeros(shape: GridShape) -> Self {
        let n = shape.len();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: GridShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} voxels", shape.len()),
                got: data.len().to_string(),
            });
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param("image values must be finite and non-negative"));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, coords: &[usize]) -> f64 {
        self.data[self.shape.index(coords)]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Particle share of the mixed signal, in (0, 1].
    pub alpha: f64,
    /// Integration time: expected photon count at unit intensity.
    pub delta: f64,
    /// Background normalization constant.
    pub gain: f64,
}

impl NoiseParams {
    pub fn new(alpha: f64, delta: f64, gain: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::param(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if !(delta > 0.0) {
            return Err(Error::param(format!("delta must be positive, got {delta}")));
        }
        if !(gain > 0.0) {
            return Err(Error::param(format!("gain must be positive, got {gain}")));
        }
        Ok(Self { alpha, delta, gain })
    }
}

struct Prepared {
    center: [f64; 3],
    precision: [[f64; 3]; 3],
    weight: f64,
    lo: [usize; 3],
    hi: [usize; 3],
}

fn prepare(
    profiles: &[SceneProfile],
    shape: &GridShape,
    truncation: f64,
) -> Result<Vec<Option<Prepared>>> {
    let d = shape.ndim();
    profiles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let sizes = p.sizes();
            if sizes.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: format!("{d}D profile"),
                    got: format!("{}D", sizes.len()),
                });
            }
            let cov = p.covariance().map_err(|_| Error::SingularCovariance(i))?;
            let inv = cov
                .cholesky()
                .map(|c| c.inverse())
                .ok_or(Error::SingularCovariance(i))?;
            let radius = truncation * sizes.iter().copied().fold(0.0, f64::max);
            let mut lo = [0usize; 3];
            let mut hi = [0usize; 3];
            for a in 0..d {
                let max = shape.dims()[a] as f64 - 1.0;
                let l = (p.position[a] - radius).ceil().max(0.0);
                let h = (p.position[a] + radius).floor().min(max);
                if !(l <= h) {
                    return Ok(None);
                }
                lo[a] = l as usize;
                hi[a] = h as usize;
            }
            let mut precision = [[0.0; 3]; 3];
            for r in 0..d {
                for c in 0..d {
                    precision[r][c] = inv[(r, c)];
                }
            }
            Ok(Some(Prepared {
                center: [p.position[0], p.position[1], p.position[2]],
                precision,
                weight: p.weight,
                lo,
                hi,
            }))
        })
        .collect()
}

/// Sum of weighted Gaussian profiles sampled at voxel centers (integer
/// coordinates). Each profile only contributes inside its box of half-width
/// `truncation · max(size)`.
pub fn render_profiles(
    profiles: &[SceneProfile],
    shape: &GridShape,
    truncation: f64,
) -> Result<ImageBuffer> {
    if !(truncation >= 3.0) {
        return Err(Error::param(format!("truncation must be >= 3, got {truncation}")));
    }
    let prepared = prepare(profiles, shape, truncation)?;
    let d = shape.ndim();
    let dims = shape.dims();
    let nx = dims[0];
    // Slabs along the slowest axis; within a voxel, profiles accumulate in
    // index order, so the result does not depend on the thread schedule.
    let slab_axis = d - 1;
    let slab_len = shape.len() / dims[slab_axis];
    let mut data = vec![0.0; shape.len()];
    data.par_chunks_mut(slab_len)
        .enumerate()
        .for_each(|(s, slab)| {
            for p in prepared.iter().flatten() {
                if s < p.lo[slab_axis] || s > p.hi[slab_axis] {
                    continue;
                }
                let m = &p.precision;
                if d == 2 {
                    let dy = s as f64 - p.center[1];
                    let row = &mut slab[..nx];
                    for x in p.lo[0]..=p.hi[0] {
                        let dx = x as f64 - p.center[0];
                        let q = m[0][0] * dx * dx + 2.0 * m[0][1] * dx * dy + m[1][1] * dy * dy;
                        row[x] += p.weight * (-0.5 * q).exp();
                    }
                } else {
                    let dz = s as f64 - p.center[2];
                    for y in p.lo[1]..=p.hi[1] {
                        let dy = y as f64 - p.center[1];
                        let row = &mut slab[y * nx..(y + 1) * nx];
                        for x in p.lo[0]..=p.hi[0] {
                            let dx = x as f64 - p.center[0];
                            let q = m[0][0] * dx * dx
                                + m[1][1] * dy * dy
                                + m[2][2] * dz * dz
                                + 2.0 * (m[0][1] * dx * dy + m[0][2] * dx * dz + m[1][2] * dy * dz);
                            row[x] += p.weight * (-0.5 * q).exp();
                        }
                    }
                }
            }
        });
    Ok(ImageBuffer {
        shape: shape.clone(),
        data,
    })
}

/// Background normalization constant: the maximum of the first background image.
pub fn background_gain(first_background: &ImageBuffer) -> Result<f64> {
    if first_background.data.is_empty() {
        return Err(Error::param("background image is empty"));
    }
    let g = first_background.max();
    if !(g > 0.0) {
        return Err(Error::param("background image is all zero; gain undefined"));
    }
    Ok(g)
}

/// `α · particles + (1 − α) / gain · background`, voxelwise.
pub fn mix(particles: &ImageBuffer, background: &ImageBuffer, params: &NoiseParams) -> Result<ImageBuffer> {
    if particles.shape != background.shape {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", particles.shape.dims()),
            got: format!("{:?}", background.shape.dims()),
        });
    }
    let a = params.alpha;
    let b = (1.0 - params.alpha) / params.gain;
    let data = particles
        .data
        .iter()
        .zip(&background.data)
        .map(|(p, g)| a * p + b * g)
        .collect();
    Ok(ImageBuffer {
        shape: particles.shape.clone(),
        data,
    })
}

/// One Poisson shot-noise draw `Poisson(Δ·v)/Δ`.
pub fn poisson_sample(value: f64, delta: f64, rng: &mut SimRng) -> f64 {
    let lambda = delta * value;
    if lambda <= 0.0 {
        return 0.0;
    }
    // rand_distr samples exactly (inversion for small means, PTRS above).
    let count: f64 = Poisson::new(lambda)
        .expect("finite positive Poisson mean")
        .sample(rng);
    count / delta
}

/// Independent Poisson shot noise per voxel. Voxel `i` draws from stream `i`
/// of `noise_stream`, so the output is independent of thread scheduling.
pub fn shot_noise(image: &ImageBuffer, delta: f64, noise_stream: &SimRng) -> Result<ImageBuffer> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::param(format!("delta must be positive, got {delta}")));
    }
    if image.data.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::param("shot noise needs finite non-negative intensities"));
    }
    let data = image
        .data
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            if v == 0.0 {
                return 0.0;
            }
            let mut rng = counter_stream(noise_stream, i as u64);
            poisson_sample(v, delta, &mut rng)
        })
        .collect();
    Ok(ImageBuffer {
        shape: image.shape.clone(),
        data,
    })
}

/// `round(min(v, 1) · 65535)`; values above 1 saturate.
pub fn quantize_u16(image: &ImageBuffer) -> Vec<u16> {
    image
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::OscillatorState;
    use crate::rng;
    use crate::Point;

    fn profile(pos: Point, sizes: &[f64], angles: &[f64], weight: f64) -> SceneProfile {
        SceneProfile {
            position: pos,
            weight,
            base_sizes: sizes.to_vec(),
            size_osc: OscillatorState::at_rest(vec![1.0; sizes.len()], 10.0).unwrap(),
            angle_osc: OscillatorState::at_rest(angles.to_vec(), 10.0).unwrap(),
        }
    }

    fn shape(d: &[usize]) -> GridShape {
        GridShape::new(d).unwrap()
    }

    #[test]
    fn single_particle_peak_and_one_sigma() {
        let p = profile(Point::new(10.0, 10.0, 0.0), &[1.0, 1.0], &[0.0], 1.0);
        let img = render_profiles(&[p], &shape(&[21, 21]), 4.0).unwrap();
        assert!((img.get(&[10, 10]) - 1.0).abs() < 1e-12);
        assert!((img.get(&[11, 10]) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((img.get(&[10, 9]) - 0.606_530_659_712_633_4).abs() < 1e-12);
        assert_eq!(img.max(), 1.0);
        // outside the truncated support
        assert_eq!(img.get(&[15, 10]), 0.0);
    }

    #[test]
    fn anisotropic_profile_matches_direct_formula() {
        let p = profile(Point::new(12.3, 8.7, 0.0), &[2.0, 1.2], &[0.7], 0.8);
        let img = render_profiles(std::slice::from_ref(&p), &shape(&[30, 20]), 6.0).unwrap();
        let inv = p.covariance().unwrap().try_inverse().unwrap();
        for (x, y) in [(12, 9), (14, 7), (10, 10), (13, 8)] {
            let dv = nalgebra::DVector::from_vec(vec![x as f64 - 12.3, y as f64 - 8.7]);
            let q = (dv.transpose() * &inv * &dv)[0];
            assert!((img.get(&[x, y]) - 0.8 * (-0.5 * q).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn superposition_of_separated_particles() {
        let a = profile(Point::new(10.0, 10.0, 0.0), &[1.0, 1.5], &[0.3], 1.0);
        let b = profile(Point::new(30.0, 12.0, 0.0), &[1.2, 1.0], &[1.3], 1.0);
        let s = shape(&[45, 25]);
        let both = render_profiles(&[a.clone(), b.clone()], &s, 4.0).unwrap();
        let ia = render_profiles(&[a], &s, 4.0).unwrap();
        let ib = render_profiles(&[b], &s, 4.0).unwrap();
        for i in 0..s.len() {
            assert!((both.data()[i] - ia.data()[i] - ib.data()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn three_d_peak() {
        let p = profile(Point::new(5.0, 6.0, 7.0), &[1.0, 2.0, 1.5], &[0.1, 0.2, 0.3], 1.0);
        let img = render_profiles(&[p], &shape(&[12, 12, 14]), 4.0).unwrap();
        assert!((img.get(&[5, 6, 7]) - 1.0).abs() < 1e-12);
        assert!((img.max() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn render_rejects_bad_truncation() {
        assert!(render_profiles(&[], &shape(&[4, 4]), 2.0).is_err());
    }

    #[test]
    fn gain_examples() {
        let mut data = vec![0.0; 16];
        data[5] = 3.7;
        let img = ImageBuffer::from_vec(shape(&[4, 4]), data).unwrap();
        assert_eq!(background_gain(&img).unwrap(), 3.7);
        assert!(background_gain(&ImageBuffer::zeros(shape(&[4, 4]))).is_err());
        let blob = profile(Point::new(30.0, 30.0, 0.0), &[25.0, 25.0], &[0.0], 1.0);
        let img = render_profiles(&[blob], &shape(&[61, 61]), 4.0).unwrap();
        assert!((background_gain(&img).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixing_rules() {
        let s = shape(&[2, 2]);
        let p = ImageBuffer::from_vec(s.clone(), vec![1.0, 0.0, 0.5, 0.2]).unwrap();
        let b = ImageBuffer::from_vec(s.clone(), vec![2.5, 1.0, 0.0, 0.3]).unwrap();
        let only = mix(&p, &b, &NoiseParams::new(1.0, 50.0, 2.5).unwrap()).unwrap();
        assert_eq!(only.data(), p.data());
        let m = mix(&p, &b, &NoiseParams::new(0.2, 50.0, 2.5).unwrap()).unwrap();
        assert!((m.data()[0] - 1.0).abs() < 1e-15);
        let z = ImageBuffer::zeros(s.clone());
        assert_eq!(mix(&z, &z, &NoiseParams::new(0.2, 50.0, 1.0).unwrap()).unwrap(), z);
        assert!(mix(&z, &ImageBuffer::zeros(shape(&[3, 2])), &NoiseParams::new(0.2, 50.0, 1.0).unwrap()).is_err());
        assert!(NoiseParams::new(0.0, 50.0, 1.0).is_err());
        assert!(NoiseParams::new(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn zero_stays_zero_and_negative_rejected() {
        let base = rng::stream(1, "noise", 0);
        let z = ImageBuffer::zeros(shape(&[8, 8]));
        assert_eq!(shot_noise(&z, 50.0, &base).unwrap(), z);
        let bad = ImageBuffer {
            shape: shape(&[1, 2]),
            data: vec![0.1, -0.1],
        };
        assert!(shot_noise(&bad, 50.0, &base).is_err());
        assert!(shot_noise(&z, 0.0, &base).is_err());
    }

    #[test]
    fn poisson_moments() {
        let s = shape(&[1000, 1000]);
        let img = ImageBuffer::from_vec(s, vec![0.5; 1_000_000]).unwrap();
        let noisy = shot_noise(&img, 50.0, &rng::stream(2, "noise", 0)).unwrap();
        let n = noisy.data().len() as f64;
        let mean = noisy.data().iter().sum::<f64>() / n;
        let var = noisy.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 0.5).abs() / 0.5 < 0.01, "{mean}");
        assert!((var - 0.01).abs() / 0.01 < 0.03, "{var}");
        // large integration time: law of large numbers
        let mut r = rng::stream(3, "noise", 0);
        let v = poisson_sample(0.5, 1e6, &mut r);
        assert!((v - 0.5).abs() / 0.5 < 0.005);
        // output lives on the 1/Δ lattice
        assert!(noisy.data().iter().all(|v| ((v * 50.0) - (v * 50.0).round()).abs() < 1e-9));
    }

    #[test]
    fn noise_is_deterministic() {
        let img = ImageBuffer::from_vec(shape(&[64, 64]), vec![0.3; 4096]).unwrap();
        let a = shot_noise(&img, 50.0, &rng::stream(5, "noise", 1)).unwrap();
        let b = shot_noise(&img, 50.0, &rng::stream(5, "noise", 1)).unwrap();
        let c = shot_noise(&img, 50.0, &rng::stream(5, "noise", 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn quantization() {
        let img = ImageBuffer::from_vec(shape(&[2, 2]), vec![0.0, 1.0, 1.7, 0.5]).unwrap();
        assert_eq!(quantize_u16(&img), vec![0, 65535, 65535, 32768]);
    }
}
