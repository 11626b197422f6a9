use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::Point;

pub type TrackId = u64;

/// Track id → frame → position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackSet {
    tracks: BTreeMap<TrackId, BTreeMap<usize, Point>>,
    frame_count: usize,
}

impl TrackSet {
    pub fn new(frame_count: usize) -> Self {
        Self {
            tracks: BTreeMap::new(),
            frame_count,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    /// Record `position` for `id` at `frame`. A track holds at most one
    /// position per frame.
    pub fn insert(&mut self, id: TrackId, frame: usize, position: Point) -> Result<()> {
        if frame >= self.frame_count {
            return Err(Error::param(format!(
                "frame {frame} out of range (frame count {})",
                self.frame_count
            )));
        }
        let track = self.tracks.entry(id).or_default();
        if track.insert(frame, position).is_some() {
            return Err(Error::param(format!("track {id} has two positions at frame {frame}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = TrackId> + '_ {
        self.tracks.keys().copied()
    }

    pub fn track(&self, id: TrackId) -> Option<&BTreeMap<usize, Point>> {
        self.tracks.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (TrackId, &BTreeMap<usize, Point>)> {
        self.tracks.iter().map(|(k, v)| (*k, v))
    }

    pub fn detection_count(&self) -> usize {
        self.tracks.values().map(BTreeMap::len).sum()
    }

    /// Ids and positions present at each frame, ids ascending.
    pub fn by_frame(&self) -> Vec<(Vec<TrackId>, Vec<Point>)> {
        let mut frames = vec![(Vec::new(), Vec::new()); self.frame_count];
        for (&id, track) in &self.tracks {
            for (&f, p) in track {
                frames[f].0.push(id);
                frames[f].1.push(*p);
            }
        }
        frames
    }

    /// Positions only, per frame.
    pub fn detections(&self) -> Vec<Vec<Point>> {
        self.by_frame().into_iter().map(|(_, p)| p).collect()
    }

    /// Copy with every track id replaced by `f(id)`. Colliding ids are merged
    /// (error if they overlap in time).
    pub fn relabeled(&self, f: impl Fn(TrackId, usize) -> TrackId) -> Result<Self> {
        let mut out = TrackSet::new(self.frame_count);
        for (&id, track) in &self.tracks {
            for (&frame, p) in track {
                out.insert(f(id, frame), frame, *p)?;
            }
        }
        Ok(out)
    }
}
