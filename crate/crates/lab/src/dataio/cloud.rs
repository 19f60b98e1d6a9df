use std::path::Path;

use sot3d_core::math::Vec3;
use sot3d_core::PointSet;

use crate::error::{read_bytes, write_bytes, LabError, Result};

/// Headerless little-endian `f32` xyz triples.
pub fn encode_cloud(points: &PointSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(points.count() * 12);
    for p in points.points() {
        for v in [p.x, p.y, p.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_cloud(bytes: &[u8]) -> std::result::Result<PointSet, String> {
    if bytes.len() % 12 != 0 {
        return Err(format!("size {} is not a multiple of 12 bytes", bytes.len()));
    }
    let mut points = Vec::with_capacity(bytes.len() / 12);
    for (i, chunk) in bytes.chunks_exact(12).enumerate() {
        let f = |k: usize| f32::from_le_bytes(chunk[4 * k..4 * k + 4].try_into().expect("4 bytes")) as f64;
        let p = Vec3::new(f(0), f(1), f(2));
        if !p.iter().all(|v| v.is_finite()) {
            return Err(format!("point {i} is not finite"));
        }
        points.push(p);
    }
    PointSet::new(points).map_err(|e| e.to_string())
}

pub fn write_frame_cloud(points: &PointSet, path: &Path) -> Result<()> {
    write_bytes(path, &encode_cloud(points))
}

pub fn read_frame_cloud(path: &Path) -> Result<PointSet> {
    decode_cloud(&read_bytes(path)?).map_err(|m| LabError::format(path, m))
}

/// `frames/NNNNNN.bin` for 0-based frame `frame`.
pub fn frame_file(frame: usize) -> String {
    format!("frames/{frame:06}.bin")
}
