use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::model::MemoryView;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::nn::{Graph, Tensor, Var};

/// One remembered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    /// Resampled coordinates in world space.
    pub coords: Vec<Vec3>,
    /// Backbone features `[P x F]`, detached.
    pub features: Tensor,
    /// 1 where the point lies in that frame's box.
    pub mask: Vec<f64>,
}

/// The K most recent frames; pushing past capacity evicts the oldest.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerMemory {
    capacity: usize,
    entries: VecDeque<MemoryEntry>,
}

impl TrackerMemory {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), entries: VecDeque::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter()
    }

    /// Rows of the concatenated memory `H`.
    pub fn rows(&self) -> usize {
        self.entries.iter().map(|e| e.coords.len()).sum()
    }

    pub fn push(&mut self, entry: MemoryEntry) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    /// `H` as graph constants, coordinates relative to `center`.
    pub fn view(&self, g: &mut Graph, center: &Vec3) -> Result<MemoryView> {
        if self.entries.is_empty() {
            return Err(Error::InvalidArgument("tracker memory is empty".into()));
        }
        let parts = self
            .entries
            .iter()
            .map(|e| Ok((g.constant(e.features.clone())?, e.coords.as_slice(), e.mask.as_slice())))
            .collect::<Result<Vec<_>>>()?;
        view_from_parts(g, &parts, center)
    }
}

/// Concatenates `(features, world coordinates, mask)` frames into a memory view around `center`.
pub fn view_from_parts(g: &mut Graph, parts: &[(Var, &[Vec3], &[f64])], center: &Vec3) -> Result<MemoryView> {
    let feats: Vec<Var> = parts.iter().map(|p| p.0).collect();
    let features = if feats.len() == 1 { feats[0] } else { g.concat_rows(&feats)? };
    let coords = parts.iter().flat_map(|p| p.1.iter().map(|c| c - center)).collect();
    let mask = parts.iter().flat_map(|p| p.2.iter().copied()).collect();
    Ok(MemoryView { features, coords, mask })
}
