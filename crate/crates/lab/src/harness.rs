//! Experiment plumbing behind the CLI: train, track, evaluate, ablate and report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sot3d_core::baselines::{baseline_centroid, baseline_static};
use sot3d_core::metrics::{aggregate, MetricsReport, Scores, SequenceResult};
use sot3d_core::nn::ParamStore;
use sot3d_core::tracker::{
    track_sequence, train, tuple_gradients, BatchRunner, EpochLog, LossBreakdown, TrackerConfig, TrainingTuple,
    TupleOutcome,
};

use crate::dataio::{
    decode_split, list_sequences, read_results, read_sequence, write_results, Checkpoint, LoadedSequence, Sequence,
    SplitManifest,
};
use crate::error::{read_string, write_bytes, LabError, Result};

/// All sequences under a data root, keyed by id.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub sequences: BTreeMap<String, Sequence>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let mut sequences = BTreeMap::new();
        for dir in list_sequences(root)? {
            let seq = read_sequence(&dir)?;
            if let Some(prev) = sequences.insert(seq.id().to_string(), seq) {
                return Err(LabError::format(&dir, format!("sequence id {} also used by {}", prev.id(), prev.dir.display())));
            }
        }
        Ok(Self { root: root.to_path_buf(), sequences })
    }

    pub fn select(&self, ids: &[String]) -> Result<Vec<&Sequence>> {
        ids.iter()
            .map(|id| {
                self.sequences
                    .get(id)
                    .ok_or_else(|| LabError::Usage(format!("sequence {id} not found under {}", self.root.display())))
            })
            .collect()
    }

    /// `(id, category)` of every sequence, in id order.
    pub fn labels(&self) -> Vec<(String, String)> {
        self.sequences.values().map(|s| (s.meta.id.clone(), s.meta.category.clone())).collect()
    }
}

pub fn read_split(path: &Path) -> Result<SplitManifest> {
    decode_split(&read_string(path)?, path)
}

/// Evaluates batch elements on the current rayon pool; results keep input order.
pub struct ParallelRunner;

impl BatchRunner for ParallelRunner {
    fn run(&self, params: &ParamStore, cfg: &TrackerConfig, batch: &[TrainingTuple]) -> Vec<sot3d_core::Result<TupleOutcome>> {
        batch.par_iter().map(|t| tuple_gradients(params, cfg, t)).collect()
    }
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogLine {
    pub epoch: usize,
    pub tuples: usize,
    pub loss: LossBreakdown,
    pub wall_time_s: f64,
}

pub fn train_on(
    seqs: &[&Sequence],
    cfg: &TrackerConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&TrainLogLine),
) -> Result<(Checkpoint, Vec<TrainLogLine>)> {
    let loaded: Vec<LoadedSequence> = seqs.par_iter().map(|s| s.load()).collect::<Result<_>>()?;
    let start = Instant::now();
    let mut lines = Vec::new();
    let outcome = train(&loaded, cfg, seed, &ParallelRunner, |e: &EpochLog| {
        let line = TrainLogLine { epoch: e.epoch, tuples: e.tuples, loss: e.loss, wall_time_s: start.elapsed().as_secs_f64() };
        on_epoch(&line);
        lines.push(line);
    })?;
    Ok((Checkpoint { config: cfg.clone(), params: outcome.params }, lines))
}

/// Log lines without wall time, for reproducibility checks.
pub fn encode_train_log(lines: &[TrainLogLine], with_time: bool) -> String {
    let mut out = String::new();
    for l in lines {
        let mut v = serde_json::to_value(l).expect("log serializes");
        if !with_time {
            v.as_object_mut().expect("object").remove("wall_time_s");
        }
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackerKind {
    Prot3d,
    Static,
    Centroid,
}

impl TrackerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Prot3d => "prot3d",
            Self::Static => "static",
            Self::Centroid => "centroid",
        }
    }
}

/// Crop scale the centroid baseline uses when no checkpoint provides one.
pub const CENTROID_SCALE: f64 = 2.0;

/// A tracked sequence and the time it took.
#[derive(Debug, Clone)]
pub struct Tracked {
    pub result: SequenceResult,
    pub seconds: f64,
}

/// Runs `kind` over `seqs` on the current rayon pool; output in input order.
pub fn track_all(kind: TrackerKind, ckpt: Option<&Checkpoint>, seqs: &[&Sequence]) -> Result<Vec<Tracked>> {
    if kind == TrackerKind::Prot3d && ckpt.is_none() {
        return Err(LabError::Usage("the prot3d tracker needs --ckpt".into()));
    }
    seqs.par_iter()
        .map(|seq| {
            let start = Instant::now();
            let first = seq.first_box()?;
            let loaded = seq.load()?;
            let result = match kind {
                TrackerKind::Static => baseline_static(seq.id(), &loaded, first),
                TrackerKind::Centroid => {
                    let scale = ckpt.map_or(CENTROID_SCALE, |c| c.config.search_scale);
                    baseline_centroid(seq.id(), &loaded, first, scale)?
                }
                TrackerKind::Prot3d => {
                    let ck = ckpt.expect("checked above");
                    track_sequence(seq.id(), &loaded, first, &ck.config, &ck.params)?
                }
            };
            Ok(Tracked { result, seconds: start.elapsed().as_secs_f64() })
        })
        .collect()
}

pub fn write_results_dir(out: &Path, tracked: &[Tracked]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for t in tracked {
        let p = out.join(format!("{}.jsonl", t.result.id));
        write_results(&t.result, &p)?;
        paths.push(p);
    }
    Ok(paths)
}

/// Reads `<dir>/<id>.jsonl` for every id; a missing file is a protocol violation.
pub fn read_results_dir(dir: &Path, ids: &[String]) -> Result<Vec<SequenceResult>> {
    ids.iter()
        .map(|id| {
            let p = dir.join(format!("{id}.jsonl"));
            if !p.is_file() {
                return Err(LabError::Core(sot3d_core::Error::Protocol(format!(
                    "no results for sequence {id} ({} is missing)",
                    p.display()
                ))));
            }
            read_results(&p)
        })
        .collect()
}

pub fn evaluate(results: &[SequenceResult], seqs: &[&Sequence]) -> Result<MetricsReport> {
    let truths: Vec<_> = seqs.iter().map(|s| s.truth()).collect();
    Ok(aggregate(results, &truths)?)
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Human-readable report: overall, per class, per attribute (scores in percent).
pub fn format_report(title: &str, report: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let _ = writeln!(s, "{:<16} {:>5} {:>8} {:>8} {:>8}", "group", "seqs", "mAO", "mSR50", "mSR75");
    let row = |s: &mut String, name: &str, n: usize, sc: &Scores| {
        let _ = writeln!(s, "{:<16} {:>5} {:>8} {:>8} {:>8}", name, n, pct(sc.ao), pct(sc.sr50), pct(sc.sr75));
    };
    row(&mut s, "overall", report.sequences.len(), &report.overall);
    for c in &report.classes {
        row(&mut s, &format!("class:{}", c.category), c.sequences, &c.scores);
    }
    for a in &report.attributes {
        match &a.summary {
            Some(sum) => row(&mut s, &format!("attr:{}", a.attribute), a.sequences, &sum.overall),
            None => {
                let _ = writeln!(s, "{:<16} {:>5} {:>8} {:>8} {:>8}", format!("attr:{}", a.attribute), 0, "-", "-", "-");
            }
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationAxis {
    Stages,
    Memory,
}

impl AblationAxis {
    pub fn values(self) -> [usize; 3] {
        match self {
            Self::Stages => [1, 2, 3],
            Self::Memory => [2, 3, 4],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Stages => "stages N",
            Self::Memory => "memory K",
        }
    }

    pub fn apply(self, cfg: &TrackerConfig, value: usize) -> TrackerConfig {
        let mut c = cfg.clone();
        match self {
            Self::Stages => c.stages = value,
            Self::Memory => c.memory_size = value,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: usize,
    pub scores: Scores,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub rows: Vec<AblationRow>,
}

/// Trains, tracks and evaluates one model per grid value of `axis`.
pub fn ablate(
    axis: AblationAxis,
    train_seqs: &[&Sequence],
    test_seqs: &[&Sequence],
    base: &TrackerConfig,
    seed: u64,
) -> Result<AblationTable> {
    let mut rows = Vec::new();
    for value in axis.values() {
        let cfg = axis.apply(base, value);
        let (ckpt, log) = train_on(train_seqs, &cfg, seed, |_| {})?;
        let tracked = track_all(TrackerKind::Prot3d, Some(&ckpt), test_seqs)?;
        let results: Vec<_> = tracked.into_iter().map(|t| t.result).collect();
        let report = evaluate(&results, test_seqs)?;
        let final_loss = log.last().map_or(f64::NAN, |l| l.loss.total);
        rows.push(AblationRow { value, scores: report.overall, final_loss });
    }
    Ok(AblationTable { axis, rows })
}

pub fn format_ablation(t: &AblationTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:>8} {:>8} {:>8} {:>10}", t.axis.label(), "mAO", "mSR50", "mSR75", "loss");
    for r in &t.rows {
        let _ = writeln!(
            s,
            "{:<10} {:>8} {:>8} {:>8} {:>10.4}",
            r.value,
            pct(r.scores.ao),
            pct(r.scores.sr50),
            pct(r.scores.sr75),
            r.final_loss
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub tracker: String,
    pub scores: Scores,
}

/// One row per named report, in the given order.
pub fn compare(reports: &[(String, MetricsReport)]) -> Vec<ComparisonRow> {
    reports.iter().map(|(n, r)| ComparisonRow { tracker: n.clone(), scores: r.overall }).collect()
}

pub fn format_comparison(rows: &[ComparisonRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>8} {:>8} {:>8}", "tracker", "mAO", "mSR50", "mSR75");
    for r in rows {
        let _ = writeln!(s, "{:<16} {:>8} {:>8} {:>8}", r.tracker, pct(r.scores.ao), pct(r.scores.sr50), pct(r.scores.sr75));
    }
    s
}

/// Provenance written next to every CLI output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub jobs: usize,
    /// File name or role to SHA-256 of the config that produced the output.
    pub config_sha256: BTreeMap<String, String>,
    pub recipe_sha256: Option<String>,
    pub sequence_seconds: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, jobs: usize) -> Self {
        Self { tool_version: env!("CARGO_PKG_VERSION").into(), command: command.into(), jobs, ..Self::default() }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        write_bytes(path, s.as_bytes())
    }
}
