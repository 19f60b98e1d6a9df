use std::path::Path;

use serde::{Deserialize, Serialize};
use sot3d_core::metrics::{Prediction, SequenceResult};

use super::anno::parse_box;
use crate::error::{read_string, write_bytes, LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultLine {
    frame: usize,
    #[serde(rename = "box")]
    bbox: Vec<f64>,
    score: f64,
}

pub fn encode_results(result: &SequenceResult) -> String {
    let mut out = String::new();
    for p in &result.predictions {
        let line = ResultLine { frame: p.frame, bbox: p.bbox.to_array().to_vec(), score: p.score };
        out.push_str(&serde_json::to_string(&line).expect("result serializes"));
        out.push('\n');
    }
    out
}

pub fn decode_results(text: &str, id: &str, path: &Path) -> Result<SequenceResult> {
    let mut predictions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let r: ResultLine = serde_json::from_str(line).map_err(|e| LabError::format(path, format!("line {n}: {e}")))?;
        let bbox = parse_box(&r.bbox).map_err(|m| LabError::format(path, format!("line {n} (frame {}): {m}", r.frame)))?;
        if !r.score.is_finite() {
            return Err(LabError::format(path, format!("line {n}: score is not finite")));
        }
        predictions.push(Prediction { frame: r.frame, bbox, score: r.score });
    }
    Ok(SequenceResult { id: id.to_string(), predictions })
}

pub fn write_results(result: &SequenceResult, path: &Path) -> Result<()> {
    write_bytes(path, encode_results(result).as_bytes())
}

/// Reads `path`; the sequence id is the file stem.
pub fn read_results(path: &Path) -> Result<SequenceResult> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| LabError::format(path, "result file name has no sequence id"))?;
    decode_results(&read_string(path)?, id, path)
}
