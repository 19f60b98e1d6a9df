use alloc::string::String;
use alloc::vec::Vec;

use super::config::TrackerConfig;
use super::memory::{MemoryEntry, TrackerMemory};
use super::model::{backbone, decode_box, forward_search, region_grid, TrackOutput};
use crate::error::{Error, Result};
use crate::geom::{contains, crop_points, Box9DoF, PointSet};
use crate::metrics::{Prediction, SequenceResult};
use crate::nn::{Graph, ParamStore};
use crate::synth::GeneratedSequence;

/// Random access to the clouds of a sequence.
pub trait FrameSource {
    fn num_frames(&self) -> usize;
    fn cloud(&self, frame: usize) -> Result<PointSet>;
}

/// A sequence with ground-truth boxes (`None` where the target is absent).
pub trait AnnotatedSource: FrameSource {
    fn annotation(&self, frame: usize) -> Option<Box9DoF>;
}

impl FrameSource for GeneratedSequence {
    fn num_frames(&self) -> usize {
        self.clouds.len()
    }

    fn cloud(&self, frame: usize) -> Result<PointSet> {
        self.clouds
            .get(frame)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("frame {frame} out of range")))
    }
}

impl AnnotatedSource for GeneratedSequence {
    fn annotation(&self, frame: usize) -> Option<Box9DoF> {
        self.boxes.get(frame).copied().flatten()
    }
}

/// Result of one tracking step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub bbox: Box9DoF,
    pub score: f64,
    /// Set when the search region was empty and the previous box was re-emitted.
    pub fallback: bool,
    pub output: Option<TrackOutput>,
}

/// Online tracker state for one sequence.
pub struct Tracker<'a> {
    cfg: &'a TrackerConfig,
    params: &'a ParamStore,
    memory: TrackerMemory,
    prev: Box9DoF,
}

impl<'a> Tracker<'a> {
    /// Seeds the memory from the first frame and its given box.
    pub fn new(cfg: &'a TrackerConfig, params: &'a ParamStore, first: &PointSet, first_box: Box9DoF) -> Result<Self> {
        cfg.validate()?;
        let mut t = Self { cfg, params, memory: TrackerMemory::new(cfg.memory_size), prev: first_box };
        let (crop, _) = crop_points(first, &first_box, cfg.search_scale)?;
        if crop.is_empty() {
            return Err(Error::InvalidArgument("the first frame has no points around the given box".into()));
        }
        let mut g = Graph::new();
        let p = params.bind_frozen(&mut g)?;
        let center = first_box.center();
        let rel: Vec<_> = crop.points().iter().map(|q| q - center).collect();
        let enc = backbone(&mut g, &p, cfg, &rel)?;
        let coords: Vec<_> = enc.coords.iter().map(|c| c + center).collect();
        let mask = coords.iter().map(|c| f64::from(u8::from(contains(&first_box, c)))).collect();
        t.memory.push(MemoryEntry { coords, features: g.value(enc.features).clone(), mask });
        Ok(t)
    }

    pub fn memory(&self) -> &TrackerMemory {
        &self.memory
    }

    pub fn prev_box(&self) -> Box9DoF {
        self.prev
    }

    pub fn step(&mut self, cloud: &PointSet) -> Result<Step> {
        let cfg = self.cfg;
        let (crop, _) = crop_points(cloud, &self.prev, cfg.search_scale)?;
        if crop.is_empty() {
            return Ok(Step { bbox: self.prev, score: 0.0, fallback: true, output: None });
        }
        let center = self.prev.center();
        let rel: Vec<_> = crop.points().iter().map(|q| q - center).collect();
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g)?;
        let mem = self.memory.view(&mut g, &center)?;
        let region = region_grid(cfg, &self.prev)?;
        let fwd = forward_search(&mut g, &p, cfg, &rel, &mem, &region)?;
        let out = decode_box(g.value(fwd.table), &self.prev)?;

        let coords: Vec<_> = fwd.encoded.coords.iter().map(|c| c + center).collect();
        let mask = coords.iter().map(|c| f64::from(u8::from(contains(&out.bbox, c)))).collect();
        self.memory.push(MemoryEntry { coords, features: g.value(fwd.encoded.features).clone(), mask });
        self.prev = out.bbox;
        Ok(Step { bbox: out.bbox, score: out.score, fallback: false, output: Some(out) })
    }
}

/// Tracks from the given first-frame box; one prediction per later frame.
pub fn track_sequence<S: FrameSource + ?Sized>(
    id: &str,
    seq: &S,
    first_box: Box9DoF,
    cfg: &TrackerConfig,
    params: &ParamStore,
) -> Result<SequenceResult> {
    let n = seq.num_frames();
    let mut tracker = Tracker::new(cfg, params, &seq.cloud(0)?, first_box)?;
    let mut predictions = Vec::with_capacity(n.saturating_sub(1));
    for frame in 1..n {
        let s = tracker.step(&seq.cloud(frame)?)?;
        predictions.push(Prediction { frame, bbox: s.bbox, score: s.score });
    }
    Ok(SequenceResult { id: String::from(id), predictions })
}
