use std::path::{Path, PathBuf};

use sot3d_core::metrics::SequenceTruth;
use sot3d_core::synth::GeneratedSequence;
use sot3d_core::tracker::{AnnotatedSource, FrameSource};
use sot3d_core::{Box9DoF, PointSet};

use super::anno::{decode_annotations, encode_annotations, AbsenceReason, FrameRecord};
use super::cloud::{encode_cloud, frame_file, read_frame_cloud};
use super::meta::{decode_meta, encode_meta, SequenceMeta};
use crate::error::{read_string, write_bytes, LabError, Result};

pub const META_FILE: &str = "meta.json";
pub const ANNO_FILE: &str = "anno.jsonl";

/// A sequence directory: metadata and annotations in memory, clouds read on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub dir: PathBuf,
    pub meta: SequenceMeta,
    pub frames: Vec<FrameRecord>,
}

impl Sequence {
    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn first_box(&self) -> Result<Box9DoF> {
        self.frames
            .first()
            .and_then(|f| f.bbox)
            .ok_or_else(|| LabError::format(&self.dir.join(ANNO_FILE), "frame 0 must carry the initial box"))
    }

    pub fn read_cloud(&self, frame: usize) -> Result<PointSet> {
        read_frame_cloud(&self.dir.join(frame_file(frame)))
    }

    pub fn truth(&self) -> SequenceTruth {
        SequenceTruth {
            id: self.meta.id.clone(),
            category: self.meta.category.clone(),
            attributes: self.meta.attributes,
            symmetry: self.meta.symmetry,
            boxes: self.frames.iter().map(|f| f.bbox).collect(),
        }
    }

    /// Loads every cloud into memory.
    pub fn load(&self) -> Result<LoadedSequence> {
        let clouds = (0..self.frames.len()).map(|f| self.read_cloud(f)).collect::<Result<_>>()?;
        Ok(LoadedSequence { seq: self.clone(), clouds })
    }
}

fn core_io(e: LabError) -> sot3d_core::Error {
    sot3d_core::Error::InvalidArgument(e.to_string())
}

impl FrameSource for Sequence {
    fn num_frames(&self) -> usize {
        self.frames.len()
    }

    fn cloud(&self, frame: usize) -> sot3d_core::Result<PointSet> {
        self.read_cloud(frame).map_err(core_io)
    }
}

impl AnnotatedSource for Sequence {
    fn annotation(&self, frame: usize) -> Option<Box9DoF> {
        self.frames.get(frame).and_then(|f| f.bbox)
    }
}

/// A sequence with all clouds resident.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSequence {
    pub seq: Sequence,
    pub clouds: Vec<PointSet>,
}

impl FrameSource for LoadedSequence {
    fn num_frames(&self) -> usize {
        self.clouds.len()
    }

    fn cloud(&self, frame: usize) -> sot3d_core::Result<PointSet> {
        self.clouds
            .get(frame)
            .cloned()
            .ok_or_else(|| sot3d_core::Error::InvalidArgument(format!("frame {frame} out of range")))
    }
}

impl AnnotatedSource for LoadedSequence {
    fn annotation(&self, frame: usize) -> Option<Box9DoF> {
        self.seq.annotation(frame)
    }
}

/// Reads `meta.json` and `anno.jsonl`; clouds stay on disk.
pub fn read_sequence(dir: &Path) -> Result<Sequence> {
    let meta_path = dir.join(META_FILE);
    let meta = decode_meta(&read_string(&meta_path)?, &meta_path)?;
    let anno_path = dir.join(ANNO_FILE);
    let frames = decode_annotations(&read_string(&anno_path)?, &anno_path)?;
    if frames.len() != meta.num_frames {
        return Err(LabError::format(
            &anno_path,
            format!("{} annotation lines for num_frames = {}", frames.len(), meta.num_frames),
        ));
    }
    if frames.first().is_none_or(|f| !f.is_present()) {
        return Err(LabError::format(&anno_path, "frame 0 must be present"));
    }
    Ok(Sequence { dir: dir.to_path_buf(), meta, frames })
}

/// Writes a generated sequence as directory `dir` with id `id`.
pub fn write_generated(dir: &Path, id: &str, seq: &GeneratedSequence) -> Result<()> {
    let meta = SequenceMeta {
        id: id.to_string(),
        category: seq.category.clone(),
        attributes: seq.attributes,
        symmetry: seq.symmetry,
        fps: seq.fps,
        num_frames: seq.num_frames(),
    };
    let frames: Vec<FrameRecord> = seq
        .boxes
        .iter()
        .enumerate()
        .map(|(i, b)| match b {
            Some(b) => FrameRecord::present(i, *b),
            None => FrameRecord::absent(i, AbsenceReason::FullOcclusion),
        })
        .collect();
    write_bytes(&dir.join(META_FILE), encode_meta(&meta).as_bytes())?;
    write_bytes(&dir.join(ANNO_FILE), encode_annotations(&frames).as_bytes())?;
    for (i, c) in seq.clouds.iter().enumerate() {
        write_bytes(&dir.join(frame_file(i)), &encode_cloud(c))?;
    }
    Ok(())
}

/// Sequence directories under `root` (those holding a `meta.json`), sorted by name.
pub fn list_sequences(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| LabError::io(root, e))? {
        let entry = entry.map_err(|e| LabError::io(root, e))?;
        let p = entry.path();
        if p.is_dir() && p.join(META_FILE).is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
