use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::scene::AnimalMask;
use crate::Point;

use super::matching::match_frame;
use super::tracks::TrackSet;

/// Imperfect per-frame detections derived from ground truth: each position is
/// dropped with probability `miss_rate`, otherwise jittered by an isotropic
/// Gaussian of std `jitter_std`; `Poisson(clutter_rate)` false detections per
/// frame are drawn uniformly in `mask`.
pub fn degrade_tracks<R: Rng + ?Sized>(
    gt: &TrackSet,
    jitter_std: f64,
    miss_rate: f64,
    clutter_rate: f64,
    mask: &AnimalMask,
    rng: &mut R,
) -> Result<Vec<Vec<Point>>> {
    if !(jitter_std >= 0.0) || !(clutter_rate >= 0.0) || !(0.0..=1.0).contains(&miss_rate) {
        return Err(Error::param(
            "jitter_std and clutter_rate must be >= 0, miss_rate in [0, 1]",
        ));
    }
    let d = mask.ndim();
    let jitter = Normal::new(0.0, jitter_std).map_err(|e| Error::param(e.to_string()))?;
    let clutter = if clutter_rate > 0.0 {
        Some(Poisson::new(clutter_rate).map_err(|e| Error::param(e.to_string()))?)
    } else {
        None
    };
    let voxels: Vec<[usize; 3]> = mask.true_voxels().collect();
    let mut out = Vec::with_capacity(gt.frame_count());
    for positions in gt.detections() {
        let mut dets = Vec::with_capacity(positions.len());
        for p in positions {
            if miss_rate > 0.0 && rng.random_bool(miss_rate) {
                continue;
            }
            let mut q = p;
            if jitter_std > 0.0 {
                for a in 0..d {
                    q[a] += jitter.sample(rng);
                }
            }
            dets.push(q);
        }
        if let Some(c) = &clutter {
            let k = c.sample(rng) as usize;
            for _ in 0..k {
                let v = voxels[rng.random_range(0..voxels.len())];
                let mut q = Point::zeros();
                for a in 0..d {
                    q[a] = v[a] as f64 + rng.random_range(-0.5..0.5);
                }
                dets.push(q);
            }
        }
        out.push(dets);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Detection precision / recall / F1 over all frames, matched with `eta`.
pub fn detection_scores(gt: &TrackSet, detections: &[Vec<Point>], eta: f64) -> Result<DetectionScores> {
    if detections.len() != gt.frame_count() {
        return Err(Error::FrameCountMismatch {
            gt: gt.frame_count(),
            pred: detections.len(),
        });
    }
    let (mut tp, mut n_gt, mut n_det) = (0usize, 0usize, 0usize);
    for (g, d) in gt.detections().iter().zip(detections) {
        tp += match_frame(g, d, eta)?.len();
        n_gt += g.len();
        n_det += d.len();
    }
    let precision = if n_det == 0 { 0.0 } else { tp as f64 / n_det as f64 };
    let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
    let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (n_gt + n_det) as f64 };
    Ok(DetectionScores {
        precision,
        recall,
        f1,
    })
}
