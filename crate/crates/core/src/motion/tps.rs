//! Thin-plate-spline interpolation of control-point displacements.
//!
//! The warp is `f(x) = a0 + A x + Σ_j w_j U(|x − s_j|)` with the biharmonic
//! kernel `U(r) = r² ln r` in 2D and `U(r) = r` in 3D. The weights satisfy the
//! side conditions `Σ w_j = 0` and `Σ w_j s_jᵀ = 0`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct TpsWarp {
    dim: usize,
    source_points: Vec<Point>,
    kernel_weights: Vec<Point>,
    /// `(dim + 1) × dim`; row 0 is the translation, rows `1..=dim` the linear
    /// part (`f_c(x) = affine[0][c] + Σ_a x_a affine[1 + a][c]`).
    affine: DMatrix<f64>,
    regularization: f64,
}

#[inline]
fn kernel(dim: usize, r: f64) -> f64 {
    if dim == 2 {
        if r > 0.0 {
            r * r * r.ln()
        } else {
            0.0
        }
    } else {
        r
    }
}

#[inline]
fn dist(dim: usize, a: &Point, b: &Point) -> f64 {
    let mut s = 0.0;
    for k in 0..dim {
        let d = a[k] - b[k];
        s += d * d;
    }
    s.sqrt()
}

impl TpsWarp {
    /// The identity map, represented with zero kernel weights.
    pub fn identity(dim: usize) -> Self {
        let mut affine = DMatrix::zeros(dim + 1, dim);
        for a in 0..dim {
            affine[(1 + a, a)] = 1.0;
        }
        Self {
            dim,
            source_points: Vec::new(),
            kernel_weights: Vec::new(),
            affine,
            regularization: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source_points(&self) -> &[Point] {
        &self.source_points
    }

    pub fn kernel_weights(&self) -> &[Point] {
        &self.kernel_weights
    }

    pub fn affine(&self) -> &DMatrix<f64> {
        &self.affine
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    /// Evaluate the warp at one point.
    pub fn apply_point(&self, p: &Point) -> Point {
        let d = self.dim;
        let mut out = Point::zeros();
        for c in 0..d {
            let mut v = self.affine[(0, c)];
            for a in 0..d {
                v += p[a] * self.affine[(1 + a, c)];
            }
            out[c] = v;
        }
        for (s, w) in self.source_points.iter().zip(&self.kernel_weights) {
            let u = kernel(d, dist(d, p, s));
            for c in 0..d {
                out[c] += w[c] * u;
            }
        }
        out
    }

    /// Bending energy proxy `Σ_c wᵀ K w` (zero for affine maps).
    pub fn kernel_norm(&self) -> f64 {
        self.kernel_weights
            .iter()
            .map(|w| w.norm())
            .fold(0.0, f64::max)
    }
}

/// Fit a warp that sends `source[k]` to `target[k]`.
///
/// `regularization` is added to the kernel diagonal; with 0 the warp
/// interpolates exactly.
pub fn fit_tps(
    dim: usize,
    source: &[Point],
    target: &[Point],
    regularization: f64,
) -> Result<TpsWarp> {
    if !(2..=3).contains(&dim) {
        return Err(Error::param(format!("TPS dimension must be 2 or 3, got {dim}")));
    }
    if source.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} target points", source.len()),
            got: target.len().to_string(),
        });
    }
    if !(regularization >= 0.0) {
        return Err(Error::param("regularization must be non-negative"));
    }
    let n = source.len();
    let m = dim + 1;
    if n < m {
        return Err(Error::Degenerate(format!(
            "{n} control points cannot determine a {dim}D affine part (need {m})"
        )));
    }

    // Center the source points so the affine block stays well conditioned.
    let center: Point = source.iter().sum::<Point>() / n as f64;

    let mut p = DMatrix::zeros(n, m);
    for (i, s) in source.iter().enumerate() {
        p[(i, 0)] = 1.0;
        for a in 0..dim {
            p[(i, 1 + a)] = s[a] - center[a];
        }
    }
    let sv = p.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > smax * 1e-10).count();
    if rank < m {
        return Err(Error::Degenerate(format!(
            "affine block has rank {rank} < {m}; control points are {}",
            if dim == 2 { "collinear" } else { "coplanar" }
        )));
    }

    let size = n + m;
    let mut sys = DMatrix::zeros(size, size);
    for i in 0..n {
        for j in (i + 1)..n {
            let u = kernel(dim, dist(dim, &source[i], &source[j]));
            sys[(i, j)] = u;
            sys[(j, i)] = u;
        }
        sys[(i, i)] = regularization;
        for c in 0..m {
            sys[(i, n + c)] = p[(i, c)];
            sys[(n + c, i)] = p[(i, c)];
        }
    }
    let mut rhs = DMatrix::zeros(size, dim);
    for (i, t) in target.iter().enumerate() {
        for c in 0..dim {
            rhs[(i, c)] = t[c];
        }
    }
    let sol = sys
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| {
            Error::Degenerate(format!(
                "TPS system of size {size} is singular (duplicate control points?)"
            ))
        })?;

    let kernel_weights = (0..n)
        .map(|i| {
            let mut w = Point::zeros();
            for c in 0..dim {
                w[c] = sol[(i, c)];
            }
            w
        })
        .collect();
    // Undo the centering: f(x) = b' + A'(x − center).
    let mut affine = DMatrix::zeros(m, dim);
    for c in 0..dim {
        let mut t = sol[(n, c)];
        for a in 0..dim {
            let lin = sol[(n + 1 + a, c)];
            affine[(1 + a, c)] = lin;
            t -= lin * center[a];
        }
        affine[(0, c)] = t;
    }
    Ok(TpsWarp {
        dim,
        source_points: source.to_vec(),
        kernel_weights,
        affine,
        regularization,
    })
}

/// Evaluate `warp` at every point; output order follows input order.
pub fn apply_tps(warp: &TpsWarp, points: &[Point]) -> Vec<Point> {
    points.par_iter().map(|p| warp.apply_point(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_points(rng: &mut impl Rng, n: usize, dim: usize, scale: f64) -> Vec<Point> {
        (0..n)
            .map(|_| {
                let mut p = Point::zeros();
                for a in 0..dim {
                    p[a] = rng.random_range(0.0..scale);
                }
                p
            })
            .collect()
    }

    #[test]
    fn identity_fit_has_no_kernel_part() {
        for dim in [2, 3] {
            let mut r = rng::stream(1, "tps", dim as u64);
            let src = random_points(&mut r, 30, dim, 500.0);
            let w = fit_tps(dim, &src, &src, 0.0).unwrap();
            assert!(w.kernel_norm() < 1e-9, "{}", w.kernel_norm());
            for a in 0..dim {
                assert!(w.affine()[(0, a)].abs() < 1e-8);
                for c in 0..dim {
                    let e = if a == c { 1.0 } else { 0.0 };
                    assert!((w.affine()[(1 + a, c)] - e).abs() < 1e-10);
                }
            }
            let probes = random_points(&mut r, 20, dim, 800.0);
            for (p, q) in probes.iter().zip(apply_tps(&w, &probes)) {
                assert!((p - q).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn interpolates_control_points() {
        for dim in [2, 3] {
            let mut r = rng::stream(2, "tps", dim as u64);
            let src = random_points(&mut r, 60, dim, 1000.0);
            let tgt: Vec<Point> = src
                .iter()
                .map(|p| {
                    let mut q = p + random_points(&mut r, 1, dim, 30.0)[0];
                    q[0] += 0.01 * p[1] * p[1] / 100.0;
                    q
                })
                .collect();
            let w = fit_tps(dim, &src, &tgt, 0.0).unwrap();
            for (s, t) in src.iter().zip(&tgt) {
                assert!((w.apply_point(s) - t).norm() < 1e-8);
            }
            // side conditions
            let mut sum = Point::zeros();
            let mut moment = [Point::zeros(); 3];
            for (s, wk) in w.source_points().iter().zip(w.kernel_weights()) {
                sum += wk;
                for a in 0..dim {
                    moment[a] += s[a] * wk;
                }
            }
            assert!(sum.norm() < 1e-9);
            for m in &moment[..dim] {
                assert!(m.norm() < 1e-6);
            }
        }
    }

    #[test]
    fn reproduces_affine_maps() {
        for dim in [2, 3] {
            let mut r = rng::stream(3, "tps", dim as u64);
            let src = random_points(&mut r, 40, dim, 1024.0);
            let lin = nalgebra::Matrix3::new(1.1, 0.2, -0.1, -0.15, 0.9, 0.05, 0.3, 0.0, 1.2);
            let b = Point::new(12.0, -7.5, 3.0);
            let map = |p: &Point| {
                let mut q = lin * p + b;
                if dim == 2 {
                    let mut p2 = *p;
                    p2.z = 0.0;
                    q = lin * p2 + b;
                    q.z = 0.0;
                }
                q
            };
            let tgt: Vec<Point> = src.iter().map(map).collect();
            let w = fit_tps(dim, &src, &tgt, 0.0).unwrap();
            assert!(w.kernel_norm() < 1e-9, "{}", w.kernel_norm());
            let probes = random_points(&mut r, 100, dim, 1024.0);
            for p in &probes {
                assert!((w.apply_point(p) - map(p)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn translation_equivariant() {
        let mut r = rng::stream(4, "tps", 0);
        let src = random_points(&mut r, 25, 2, 300.0);
        let tgt: Vec<Point> = src
            .iter()
            .map(|p| p + random_points(&mut r, 1, 2, 10.0)[0])
            .collect();
        let c = Point::new(57.0, -13.0, 0.0);
        let w = fit_tps(2, &src, &tgt, 0.0).unwrap();
        let src_c: Vec<Point> = src.iter().map(|p| p + c).collect();
        let tgt_c: Vec<Point> = tgt.iter().map(|p| p + c).collect();
        let wc = fit_tps(2, &src_c, &tgt_c, 0.0).unwrap();
        for p in random_points(&mut r, 30, 2, 300.0) {
            assert!((wc.apply_point(&(p + c)) - (w.apply_point(&p) + c)).norm() < 1e-8);
        }
    }

    #[test]
    fn regularization_smooths() {
        let mut r = rng::stream(5, "tps", 0);
        let src = random_points(&mut r, 25, 2, 300.0);
        let tgt: Vec<Point> = src
            .iter()
            .map(|p| p + random_points(&mut r, 1, 2, 10.0)[0])
            .collect();
        let exact = fit_tps(2, &src, &tgt, 0.0).unwrap();
        let smooth = fit_tps(2, &src, &tgt, 1e3).unwrap();
        assert!(smooth.kernel_norm() < exact.kernel_norm());
        assert_eq!(smooth.regularization(), 1e3);
    }

    #[test]
    fn degenerate_configurations_rejected() {
        let line: Vec<Point> = (0..6).map(|i| Point::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        let err = fit_tps(2, &line, &line, 0.0).unwrap_err();
        assert!(err.to_string().contains("rank 2"), "{err}");
        let plane: Vec<Point> = (0..9)
            .map(|i| Point::new((i % 3) as f64, (i / 3) as f64, 5.0))
            .collect();
        assert!(fit_tps(3, &plane, &plane, 0.0).is_err());
        let few = vec![Point::zeros(), Point::new(1.0, 0.0, 0.0)];
        assert!(fit_tps(2, &few, &few, 0.0).is_err());
        let mut dup = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
        ];
        dup.push(dup[1]);
        let mut tgt = dup.clone();
        tgt[3].x += 1.0;
        assert!(fit_tps(2, &dup, &tgt, 0.0).is_err());
    }
}
