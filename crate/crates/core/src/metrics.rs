//! Evaluation protocol: per-frame overlaps, AO/SR per sequence and class-balanced
//! mAO / mSR50 / mSR75 with per-attribute breakdowns.
//!
//! Frame 0 carries the given initial box and is never scored. Frames whose target is
//! absent are excluded from every denominator.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{iou3d_symmetric, Box9DoF, SymmetrySpec};

/// The seven sequence attributes, in vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Attribute {
    /// Invisibility: target partially or fully hidden.
    Inv,
    /// Deformation.
    Def,
    /// Fast motion.
    Fm,
    /// Rotation.
    Rot,
    /// Scale variation.
    Sv,
    /// Similar distractors.
    Sd,
    /// Sparsity.
    Spa,
}

impl Attribute {
    pub const ALL: [Attribute; 7] = [
        Attribute::Inv,
        Attribute::Def,
        Attribute::Fm,
        Attribute::Rot,
        Attribute::Sv,
        Attribute::Sd,
        Attribute::Spa,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Attribute::Inv => "INV",
            Attribute::Def => "DEF",
            Attribute::Fm => "FM",
            Attribute::Rot => "ROT",
            Attribute::Sv => "SV",
            Attribute::Sd => "SD",
            Attribute::Spa => "SPA",
        }
    }
}

/// 7-bit attribute vector ordered as [`Attribute::ALL`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attributes(pub [bool; 7]);

impl Attributes {
    pub fn has(&self, a: Attribute) -> bool {
        self.0[a.index()]
    }

    pub fn set(&mut self, a: Attribute, value: bool) {
        self.0[a.index()] = value;
    }
}

/// Ground truth needed for scoring one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTruth {
    pub id: String,
    pub category: String,
    pub attributes: Attributes,
    pub symmetry: SymmetrySpec,
    /// One entry per frame; `None` where the target is absent.
    pub boxes: Vec<Option<Box9DoF>>,
}

impl SequenceTruth {
    /// Frames that are scored: every present frame after the first.
    pub fn evaluated_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.boxes
            .iter()
            .enumerate()
            .skip(1)
            .filter_map(|(i, b)| b.map(|_| i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub frame: usize,
    pub bbox: Box9DoF,
    pub score: f64,
}

/// A tracker's output for one sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceResult {
    pub id: String,
    pub predictions: Vec<Prediction>,
}

fn protocol(msg: String) -> Error {
    Error::Protocol(msg)
}

/// IoU of each evaluated frame, in frame order.
pub fn frame_overlaps(pred: &SequenceResult, gt: &SequenceTruth) -> Result<Vec<f64>> {
    let n = gt.boxes.len();
    let mut by_frame: BTreeMap<usize, &Box9DoF> = BTreeMap::new();
    for p in &pred.predictions {
        if p.frame == 0 || p.frame >= n {
            return Err(protocol(format!(
                "sequence {}: prediction for frame {} outside the tracked range 1..{}",
                gt.id, p.frame, n
            )));
        }
        if by_frame.insert(p.frame, &p.bbox).is_some() {
            return Err(protocol(format!("sequence {}: duplicate prediction for frame {}", gt.id, p.frame)));
        }
    }
    gt.evaluated_frames()
        .map(|f| {
            let pb = by_frame
                .get(&f)
                .ok_or_else(|| protocol(format!("sequence {}: missing prediction for frame {}", gt.id, f)))?;
            let gb = gt.boxes[f].as_ref().expect("evaluated frames are present");
            Ok(iou3d_symmetric(pb, gb, &gt.symmetry))
        })
        .collect()
}

/// Average overlap.
pub fn ao(ious: &[f64]) -> Result<f64> {
    if ious.is_empty() {
        return Err(protocol("sequence has no evaluated frames".into()));
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

/// Fraction of frames whose IoU is strictly above `tau`.
pub fn sr(ious: &[f64], tau: f64) -> Result<f64> {
    if ious.is_empty() {
        return Err(protocol("sequence has no evaluated frames".into()));
    }
    Ok(ious.iter().filter(|&&v| v > tau).count() as f64 / ious.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub ao: f64,
    pub sr50: f64,
    pub sr75: f64,
}

impl Scores {
    fn mean_of<'a>(items: impl Iterator<Item = &'a Scores>) -> Scores {
        let mut acc = Scores::default();
        let mut n = 0usize;
        for s in items {
            acc.ao += s.ao;
            acc.sr50 += s.sr50;
            acc.sr75 += s.sr75;
            n += 1;
        }
        let n = n as f64;
        Scores {
            ao: acc.ao / n,
            sr50: acc.sr50 / n,
            sr75: acc.sr75 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub id: String,
    pub category: String,
    pub attributes: Attributes,
    pub frames: usize,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub category: String,
    pub sequences: usize,
    pub scores: Scores,
}

/// Class-balanced summary over a set of sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// mAO, mSR50, mSR75.
    pub overall: Scores,
    pub classes: Vec<ClassScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRow {
    pub attribute: String,
    pub sequences: usize,
    /// `None` when no sequence carries the attribute.
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: Scores,
    pub classes: Vec<ClassScore>,
    pub attributes: Vec<AttributeRow>,
    pub sequences: Vec<SequenceScore>,
}

/// Scores one sequence against its ground truth.
pub fn score_sequence(pred: &SequenceResult, gt: &SequenceTruth) -> Result<SequenceScore> {
    let ious = frame_overlaps(pred, gt)?;
    let scores = Scores {
        ao: ao(&ious)?,
        sr50: sr(&ious, 0.5)?,
        sr75: sr(&ious, 0.75)?,
    };
    Ok(SequenceScore {
        id: gt.id.clone(),
        category: gt.category.clone(),
        attributes: gt.attributes,
        frames: ious.len(),
        scores,
    })
}

/// Class means over `scores`, then the unweighted mean over classes (sorted by label).
pub fn summarize(scores: &[SequenceScore]) -> Option<Summary> {
    if scores.is_empty() {
        return None;
    }
    let mut sorted: Vec<&SequenceScore> = scores.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut by_class: BTreeMap<&str, Vec<&Scores>> = BTreeMap::new();
    for s in sorted {
        by_class.entry(s.category.as_str()).or_default().push(&s.scores);
    }
    let classes: Vec<ClassScore> = by_class
        .iter()
        .map(|(c, v)| ClassScore {
            category: String::from(*c),
            sequences: v.len(),
            scores: Scores::mean_of(v.iter().copied()),
        })
        .collect();
    let overall = Scores::mean_of(classes.iter().map(|c| &c.scores));
    Some(Summary { overall, classes })
}

/// Per-attribute summaries over sequences whose attribute bit is set.
pub fn attribute_rows(scores: &[SequenceScore]) -> Vec<AttributeRow> {
    Attribute::ALL
        .iter()
        .map(|&a| {
            let subset: Vec<SequenceScore> = scores.iter().filter(|s| s.attributes.has(a)).cloned().collect();
            AttributeRow {
                attribute: String::from(a.label()),
                sequences: subset.len(),
                summary: summarize(&subset),
            }
        })
        .collect()
}

fn score_all(results: &[SequenceResult], gts: &[SequenceTruth]) -> Result<Vec<SequenceScore>> {
    let mut truth: BTreeMap<&str, &SequenceTruth> = BTreeMap::new();
    for g in gts {
        if truth.insert(g.id.as_str(), g).is_some() {
            return Err(protocol(format!("duplicate ground-truth sequence {}", g.id)));
        }
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        if !seen.insert(r.id.as_str()) {
            return Err(protocol(format!("duplicate results for sequence {}", r.id)));
        }
        let g = truth
            .get(r.id.as_str())
            .ok_or_else(|| protocol(format!("results for unknown sequence {}", r.id)))?;
        out.push(score_sequence(r, g)?);
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Builds a full report from already-scored sequences.
pub fn report_from_scores(mut scores: Vec<SequenceScore>) -> Result<MetricsReport> {
    scores.sort_by(|a, b| a.id.cmp(&b.id));
    let summary = summarize(&scores).ok_or_else(|| protocol("no sequences to evaluate".into()))?;
    Ok(MetricsReport {
        overall: summary.overall,
        classes: summary.classes,
        attributes: attribute_rows(&scores),
        sequences: scores,
    })
}

/// Class-balanced report over all `results`.
pub fn aggregate(results: &[SequenceResult], gts: &[SequenceTruth]) -> Result<MetricsReport> {
    report_from_scores(score_all(results, gts)?)
}

/// Per-attribute rows, computed exactly as `aggregate` restricted to each attribute's sequences.
pub fn attribute_report(results: &[SequenceResult], gts: &[SequenceTruth]) -> Result<Vec<AttributeRow>> {
    Ok(attribute_rows(&score_all(results, gts)?))
}
