use std::path::Path;

use serde::{Deserialize, Serialize};
use sot3d_core::metrics::Attributes;
use sot3d_core::{SymmetryAxis, SymmetrySpec};

use crate::error::{LabError, Result};

/// `meta.json` as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaFile {
    pub id: String,
    pub category: String,
    /// Ordered INV, DEF, FM, ROT, SV, SD, SPA.
    pub attributes: Vec<bool>,
    pub symmetric: bool,
    pub symmetry_axis: SymmetryAxis,
    pub k: u32,
    pub fps: f64,
    pub num_frames: usize,
    /// Reserved for image and depth streams; never read by this toolkit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modalities: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMeta {
    pub id: String,
    pub category: String,
    pub attributes: Attributes,
    pub symmetry: SymmetrySpec,
    pub fps: f64,
    pub num_frames: usize,
}

impl MetaFile {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.is_empty() {
            out.push("id is empty".into());
        }
        if self.category.is_empty() {
            out.push("category is empty".into());
        }
        if self.attributes.len() != 7 {
            out.push(format!("attributes need 7 entries, got {}", self.attributes.len()));
        }
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            out.push(format!("fps must be positive, got {}", self.fps));
        }
        if self.num_frames == 0 {
            out.push("num_frames must be positive".into());
        }
        if self.symmetric && self.k == 0 {
            out.push("symmetric sequences need k >= 1".into());
        }
        out
    }

    pub fn to_meta(&self) -> std::result::Result<SequenceMeta, String> {
        if let Some(p) = self.problems().into_iter().next() {
            return Err(p);
        }
        let mut bits = [false; 7];
        bits.copy_from_slice(&self.attributes);
        Ok(SequenceMeta {
            id: self.id.clone(),
            category: self.category.clone(),
            attributes: Attributes(bits),
            symmetry: SymmetrySpec { symmetric: self.symmetric, axis: self.symmetry_axis, k: self.k },
            fps: self.fps,
            num_frames: self.num_frames,
        })
    }
}

impl SequenceMeta {
    pub fn to_file(&self) -> MetaFile {
        MetaFile {
            id: self.id.clone(),
            category: self.category.clone(),
            attributes: self.attributes.0.to_vec(),
            symmetric: self.symmetry.symmetric,
            symmetry_axis: self.symmetry.axis,
            k: self.symmetry.k,
            fps: self.fps,
            num_frames: self.num_frames,
            modalities: None,
        }
    }
}

pub fn encode_meta(meta: &SequenceMeta) -> String {
    let mut s = serde_json::to_string_pretty(&meta.to_file()).expect("meta serializes");
    s.push('\n');
    s
}

pub fn decode_meta(text: &str, path: &Path) -> Result<SequenceMeta> {
    let file: MetaFile = serde_json::from_str(text).map_err(|e| LabError::format(path, e.to_string()))?;
    file.to_meta().map_err(|m| LabError::format(path, m))
}
