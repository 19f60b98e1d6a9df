//! Fuzzers and corruption mutations shared by the format suite and the acceptance run.
#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sot3d_core::math::Vec3;
use sot3d_core::metrics::{Prediction, SequenceResult};
use sot3d_core::synth::{generate_sequence, OcclusionWindow, ScenarioConfig, TargetShape};
use sot3d_core::tracker::{init_params, TrackerConfig};
use sot3d_core::{Box9DoF, PointSet};
use sot3d_lab::dataio::*;

pub fn random_box(rng: &mut ChaCha8Rng) -> Box9DoF {
    let mut v = [0.0; 9];
    for (i, x) in v.iter_mut().enumerate() {
        *x = match i {
            3..=5 => rng.random_range(0.01..5.0),
            6..=8 => rng.random_range(-3.14..3.14),
            _ => rng.random_range(-100.0..100.0),
        };
    }
    Box9DoF::from_array(v).unwrap()
}

pub fn random_cloud(rng: &mut ChaCha8Rng) -> PointSet {
    let n = rng.random_range(0..400);
    // f32-representable values, as every cloud the generator emits
    PointSet::new((0..n).map(|_| Vec3::from_fn(|_, _| rng.random_range(-50.0f32..50.0) as f64)).collect()).unwrap()
}

pub fn random_records(rng: &mut ChaCha8Rng) -> Vec<FrameRecord> {
    let n = rng.random_range(1..30);
    (0..n)
        .map(|f| {
            if f > 0 && rng.random_bool(0.2) {
                let reason = if rng.random_bool(0.5) { AbsenceReason::FullOcclusion } else { AbsenceReason::OutOfView };
                FrameRecord::absent(f, reason)
            } else {
                FrameRecord::present(f, random_box(rng))
            }
        })
        .collect()
}

pub fn random_result(rng: &mut ChaCha8Rng) -> SequenceResult {
    let n = rng.random_range(0..30);
    let predictions = (1..=n).map(|frame| Prediction { frame, bbox: random_box(rng), score: rng.random() }).collect();
    SequenceResult { id: "seq".into(), predictions }
}

pub fn small_config(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        frames: 5,
        density: 30.0,
        clutter_points: 20,
        ground_points: 20,
        noise_sigma: 0.01,
        velocity_min: [-0.1; 3],
        velocity_max: [0.1; 3],
        ..Default::default()
    }
}

pub fn p() -> &'static Path {
    Path::new("mem")
}

/// Byte-identity failures of cloud, annotation and result round trips over `n` fuzzed instances.
pub fn text_round_trip_failures(n: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = Vec::new();
    for i in 0..n {
        let bytes = encode_cloud(&random_cloud(&mut rng));
        if decode_cloud(&bytes).map(|c| encode_cloud(&c)).ok() != Some(bytes) {
            bad.push(format!("cloud {i}"));
        }
        let text = encode_annotations(&random_records(&mut rng));
        if decode_annotations(&text, p()).map(|r| encode_annotations(&r)).ok() != Some(text) {
            bad.push(format!("annotations {i}"));
        }
        let r = random_result(&mut rng);
        let text = encode_results(&r);
        match decode_results(&text, "seq", p()) {
            Ok(back) => {
                let close = back.predictions.iter().zip(&r.predictions).all(|(a, b)| {
                    a.bbox.to_array().iter().zip(&b.bbox.to_array()).all(|(u, v)| (u - v).abs() < 1e-12)
                });
                if encode_results(&back) != text || !close {
                    bad.push(format!("results {i}"));
                }
            }
            Err(e) => bad.push(format!("results {i}: {e}")),
        }
    }
    bad
}

/// Checkpoints over random shapes and stage counts that do not survive a round trip.
pub fn checkpoint_round_trip_failures(n: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = Vec::new();
    for i in 0..n {
        let config = TrackerConfig {
            feature_width: rng.random_range(4..12),
            search_points: 16,
            sampled_points: rng.random_range(4..16),
            knn: 3,
            stages: rng.random_range(1..4),
            ..Default::default()
        };
        let ck = Checkpoint { params: init_params(&config, i).unwrap(), config };
        let bytes = encode_checkpoint(&ck);
        match decode_checkpoint(&bytes, p()) {
            Ok(back) if back == ck && encode_checkpoint(&back) == bytes => {}
            _ => bad.push(format!("checkpoint {i}")),
        }
    }
    bad
}

/// Generator outputs the validator or reader refuses.
pub fn generator_output_rejections(root: &Path, n: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shapes = [TargetShape::BoxShell, TargetShape::CylinderShell, TargetShape::Composite];
    let mut bad = Vec::new();
    for i in 0..n {
        let frames = rng.random_range(2..6);
        let cfg = ScenarioConfig {
            frames,
            shape: shapes[i as usize % 3],
            distractors: rng.random_range(0..2),
            occlusions: if frames > 2 { vec![OcclusionWindow { start: 1, end: 2, drop_fraction: 1.0 }] } else { vec![] },
            ..small_config(rng.random())
        };
        let dir = root.join(format!("s{i}"));
        write_generated(&dir, &format!("s{i}"), &generate_sequence(&cfg).unwrap()).unwrap();
        let v = validate_sequence(&dir);
        if !v.is_empty() {
            bad.push(format!("s{i}: {v:?}"));
        } else if let Err(e) = read_sequence(&dir) {
            bad.push(format!("s{i}: {e}"));
        }
    }
    bad
}

pub type Mutation = (&'static str, fn(&Path));

pub fn edit(path: &Path, f: impl FnOnce(String) -> String) {
    let text = std::fs::read_to_string(path).unwrap();
    std::fs::write(path, f(text)).unwrap();
}

pub fn edit_line(dir: &Path, line: usize, f: impl FnOnce(&str) -> String) {
    edit(&dir.join(ANNO_FILE), |t| {
        let mut lines: Vec<String> = t.lines().map(String::from).collect();
        lines[line] = f(&lines[line]);
        lines.join("\n") + "\n"
    });
}

pub fn line(frame: usize, present: bool, absence: &str, bbox: &str) -> String {
    format!("{{\"frame\":{frame},\"present\":{present},\"absence\":{absence},\"box\":{bbox}}}")
}

/// The documented corruptions, each of which the validator must flag.
pub const MUTATIONS: [Mutation; 12] = [
    ("missing meta.json", |d| std::fs::remove_file(d.join(META_FILE)).unwrap()),
    ("truncated meta.json", |d| edit(&d.join(META_FILE), |t| t[..t.len() / 2].to_string())),
    ("six attributes", |d| edit(&d.join(META_FILE), |t| t.replacen("false,", "", 1))),
    ("zero fps", |d| edit(&d.join(META_FILE), |t| t.replace("\"fps\": 20.0", "\"fps\": 0.0"))),
    ("num_frames mismatch", |d| edit(&d.join(META_FILE), |t| t.replace("\"num_frames\": 4", "\"num_frames\": 5"))),
    ("present frame without box", |d| edit_line(d, 1, |_| line(1, true, "null", "null"))),
    ("absent frame with a box", |d| edit_line(d, 2, |_| line(2, false, "\"full_occlusion\"", "[0,0,0,1,1,1,0,0,0]"))),
    ("frame indices out of order", |d| edit_line(d, 1, |l| l.replace("\"frame\":1", "\"frame\":3"))),
    ("seven-value box", |d| edit_line(d, 1, |_| line(1, true, "null", "[0,0,0,1,1,1,0]"))),
    ("negative box size", |d| {
        edit_line(d, 0, |_| line(0, true, "null", "[0,0,0,-1,1,1,0,0,0]"))
    }),
    ("truncated cloud file", |d| {
        let p = d.join(frame_file(1));
        let b = std::fs::read(&p).unwrap();
        std::fs::write(&p, &b[..b.len() - 1]).unwrap();
    }),
    ("missing cloud file", |d| std::fs::remove_file(d.join(frame_file(3))).unwrap()),
];
/// Mutations the validator misses or that still load.
pub fn unflagged_mutations(root: &Path) -> Vec<String> {
    let cfg = ScenarioConfig { frames: 4, occlusions: vec![OcclusionWindow { start: 2, end: 3, drop_fraction: 1.0 }], ..small_config(6) };
    let seq = generate_sequence(&cfg).unwrap();
    let mut bad = Vec::new();
    for (i, (name, mutate)) in MUTATIONS.iter().enumerate() {
        let dir = root.join(format!("m{i}"));
        write_generated(&dir, "m", &seq).unwrap();
        if !validate_sequence(&dir).is_empty() {
            bad.push(format!("{name}: clean copy already flagged"));
            continue;
        }
        mutate(&dir);
        if validate_sequence(&dir).is_empty() {
            bad.push(format!("{name}: not flagged"));
        } else if read_sequence(&dir).and_then(|s| s.load()).is_ok() {
            bad.push(format!("{name}: still loads"));
        }
    }
    bad
}
