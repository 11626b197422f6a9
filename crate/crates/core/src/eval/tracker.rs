use crate::error::{Error, Result};
use crate::Point;

use super::matching::match_frame;
use super::tracks::{TrackId, TrackSet};

/// Default link gate in pixels for the desk-scale scenarios.
pub const DEFAULT_MAX_LINK: f64 = 5.0;

/// Frame-to-frame nearest-neighbor linking.
///
/// Live tracks are matched to the next frame's detections with the optimal
/// gated assignment of [`match_frame`] (gate `max_link`). Unmatched detections
/// open new tracks; unmatched tracks end.
pub fn greedy_nn_tracker(detections: &[Vec<Point>], max_link: f64) -> Result<TrackSet> {
    if !(max_link > 0.0) {
        return Err(Error::param(format!("max_link must be positive, got {max_link}")));
    }
    let mut tracks = TrackSet::new(detections.len());
    let mut live: Vec<(TrackId, Point)> = Vec::new();
    let mut next_id: TrackId = 0;
    for (frame, dets) in detections.iter().enumerate() {
        let last: Vec<Point> = live.iter().map(|(_, p)| *p).collect();
        let matches = match_frame(&last, dets, max_link)?;
        let mut owner: Vec<Option<TrackId>> = vec![None; dets.len()];
        for (t, d) in matches {
            owner[d] = Some(live[t].0);
        }
        let mut next_live = Vec::with_capacity(dets.len());
        for (d, p) in dets.iter().enumerate() {
            let id = owner[d].unwrap_or_else(|| {
                next_id += 1;
                next_id - 1
            });
            tracks.insert(id, frame, *p)?;
            next_live.push((id, *p));
        }
        next_live.sort_by_key(|(id, _)| *id);
        live = next_live;
    }
    Ok(tracks)
}
