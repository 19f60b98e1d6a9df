//! Classical reference trackers.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::geom::{crop_points, Box9DoF};
use crate::math::Vec3;
use crate::metrics::{Prediction, SequenceResult};
use crate::tracker::FrameSource;

/// Repeats the first-frame box on every later frame.
pub fn baseline_static<S: FrameSource + ?Sized>(id: &str, seq: &S, first: Box9DoF) -> SequenceResult {
    let predictions = (1..seq.num_frames()).map(|frame| Prediction { frame, bbox: first, score: 1.0 }).collect();
    SequenceResult { id: String::from(id), predictions }
}

/// Moves the box to the mean of the points inside the previous box scaled by `scale`;
/// size and angles are carried over, and an empty crop keeps the previous center.
pub fn baseline_centroid<S: FrameSource + ?Sized>(id: &str, seq: &S, first: Box9DoF, scale: f64) -> Result<SequenceResult> {
    let mut prev = first;
    let mut predictions = Vec::with_capacity(seq.num_frames().saturating_sub(1));
    for frame in 1..seq.num_frames() {
        let (crop, _) = crop_points(&seq.cloud(frame)?, &prev, scale)?;
        let score = if crop.is_empty() {
            0.0
        } else {
            let sum = crop.points().iter().fold(Vec3::zeros(), |acc, p| acc + p);
            prev = prev.with_center(sum / crop.count() as f64)?;
            1.0
        };
        predictions.push(Prediction { frame, bbox: prev, score });
    }
    Ok(SequenceResult { id: String::from(id), predictions })
}
