use std::path::Path;

use serde::{Deserialize, Serialize};
use sot3d_core::Box9DoF;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsenceReason {
    FullOcclusion,
    OutOfView,
}

/// One line of `anno.jsonl` as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnoLine {
    pub frame: usize,
    pub present: bool,
    pub absence: Option<AbsenceReason>,
    #[serde(rename = "box")]
    pub bbox: Option<Vec<f64>>,
}

/// A checked annotation: `present` iff the box is set iff there is no absence reason.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub frame: usize,
    pub absence: Option<AbsenceReason>,
    pub bbox: Option<Box9DoF>,
}

impl FrameRecord {
    pub fn present(frame: usize, bbox: Box9DoF) -> Self {
        Self { frame, absence: None, bbox: Some(bbox) }
    }

    pub fn absent(frame: usize, reason: AbsenceReason) -> Self {
        Self { frame, absence: Some(reason), bbox: None }
    }

    pub fn is_present(&self) -> bool {
        self.bbox.is_some()
    }

    pub fn to_line(&self) -> AnnoLine {
        AnnoLine {
            frame: self.frame,
            present: self.is_present(),
            absence: self.absence,
            bbox: self.bbox.map(|b| b.to_array().to_vec()),
        }
    }
}

/// Parses a 9-value box array `[x, y, z, w, h, l, alpha, beta, gamma]`.
pub fn parse_box(v: &[f64]) -> std::result::Result<Box9DoF, String> {
    let arr: [f64; 9] = v
        .try_into()
        .map_err(|_| format!("box needs 9 values [x,y,z,w,h,l,alpha,beta,gamma], got {}", v.len()))?;
    Box9DoF::from_array(arr).map_err(|e| e.to_string())
}

impl AnnoLine {
    /// The coherence rules, as messages (empty when the line is sound).
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match (self.present, &self.bbox, self.absence) {
            (true, None, _) => out.push("present frame has no box".to_string()),
            (false, Some(_), _) => out.push("absent frame carries a box".to_string()),
            _ => {}
        }
        match (self.present, self.absence) {
            (true, Some(_)) => out.push("present frame has an absence reason".to_string()),
            (false, None) => out.push("absent frame lacks an absence reason".to_string()),
            _ => {}
        }
        if let Some(b) = &self.bbox {
            if let Err(m) = parse_box(b) {
                out.push(m);
            }
        }
        out
    }

    pub fn to_record(&self) -> std::result::Result<FrameRecord, String> {
        if let Some(p) = self.problems().into_iter().next() {
            return Err(p);
        }
        Ok(FrameRecord {
            frame: self.frame,
            absence: self.absence,
            bbox: self.bbox.as_deref().map(parse_box).transpose()?,
        })
    }
}

pub fn encode_annotations(records: &[FrameRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r.to_line()).expect("annotation serializes"));
        out.push('\n');
    }
    out
}

/// Strict parse: the first bad line is an error naming its line number.
pub fn decode_annotations(text: &str, path: &Path) -> Result<Vec<FrameRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let parsed: AnnoLine =
            serde_json::from_str(line).map_err(|e| LabError::format(path, format!("line {n}: {e}")))?;
        let rec = parsed
            .to_record()
            .map_err(|m| LabError::format(path, format!("line {n} (frame {}): {m}", parsed.frame)))?;
        if rec.frame != i {
            return Err(LabError::format(path, format!("line {n}: expected frame {i}, found {}", rec.frame)));
        }
        out.push(rec);
    }
    Ok(out)
}
