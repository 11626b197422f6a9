use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

use super::matching::match_frame;
use super::tracks::{TrackId, TrackSet};

/// Single-threshold HOTA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HotaScores {
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
}

/// HOTA of `pred` against `gt` with a hard distance gate `eta`.
///
/// Detections are matched per frame with [`match_frame`]. With per-pair
/// counts `TPA(g, p)` over the whole sequence, each true positive scores
/// `TPA / (|g| + |p| − TPA)`; AssA is the mean of that score over all true
/// positives and HOTA is `sqrt(DetA · AssA)`.
pub fn hota(gt: &TrackSet, pred: &TrackSet, eta: f64) -> Result<HotaScores> {
    if gt.frame_count() != pred.frame_count() {
        return Err(Error::FrameCountMismatch {
            gt: gt.frame_count(),
            pred: pred.frame_count(),
        });
    }
    if !(eta > 0.0) {
        return Err(Error::param(format!("eta must be positive, got {eta}")));
    }
    let gt_frames = gt.by_frame();
    let pred_frames = pred.by_frame();

    let mut pair_tp: HashMap<(TrackId, TrackId), usize> = HashMap::new();
    let (mut tp, mut fn_, mut fp) = (0usize, 0usize, 0usize);
    for ((gids, gpts), (pids, ppts)) in gt_frames.iter().zip(&pred_frames) {
        let matches = match_frame(gpts, ppts, eta)?;
        tp += matches.len();
        fn_ += gpts.len() - matches.len();
        fp += ppts.len() - matches.len();
        for (i, j) in matches {
            *pair_tp.entry((gids[i], pids[j])).or_default() += 1;
        }
    }

    if tp + fn_ + fp == 0 {
        // Nothing to detect and nothing predicted.
        return Ok(HotaScores {
            hota: 1.0,
            det_a: 1.0,
            ass_a: 1.0,
            tp,
            fn_,
            fp,
        });
    }
    let det_a = tp as f64 / (tp + fn_ + fp) as f64;
    let ass_a = if tp == 0 {
        0.0
    } else {
        let gt_len: HashMap<TrackId, usize> = gt.iter().map(|(id, t)| (id, t.len())).collect();
        let pred_len: HashMap<TrackId, usize> = pred.iter().map(|(id, t)| (id, t.len())).collect();
        let mut pairs: Vec<_> = pair_tp.into_iter().collect();
        pairs.sort_unstable();
        let sum: f64 = pairs
            .iter()
            .map(|&((g, p), tpa)| {
                let denom = gt_len[&g] + pred_len[&p] - tpa;
                tpa as f64 * tpa as f64 / denom as f64
            })
            .sum();
        sum / tp as f64
    };
    Ok(HotaScores {
        hota: (det_a * ass_a).sqrt(),
        det_a,
        ass_a,
        tp,
        fn_,
        fp,
    })
}
