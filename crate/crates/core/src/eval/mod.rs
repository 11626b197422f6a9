//! Distance-gated HOTA scoring, a detection degrader and a baseline tracker.

mod degrade;
mod hota;
mod matching;
mod tracker;
mod tracks;

pub use degrade::{degrade_tracks, detection_scores, DetectionScores};
pub use hota::{hota, HotaScores};
pub use matching::{match_frame, min_cost_assignment};
pub use tracker::{greedy_nn_tracker, DEFAULT_MAX_LINK};
pub use tracks::{TrackId, TrackSet};

/// Default matching tolerance in pixels.
pub const DEFAULT_ETA: f64 = 2.0;
