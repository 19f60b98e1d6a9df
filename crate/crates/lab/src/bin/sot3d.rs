use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sot3d_core::metrics::MetricsReport;
use sot3d_core::tracker::TrackerConfig;
use sot3d_lab::dataio::{
    config_hash, encode_split, make_split, read_checkpoint, sha256_hex, validate_sequence, write_checkpoint,
};
use sot3d_lab::harness::{
    ablate, compare, encode_train_log, evaluate, format_ablation, format_comparison, format_report, read_results_dir,
    read_split, track_all, train_on, write_results_dir, AblationAxis, Dataset, RunManifest, TrackerKind,
};
use sot3d_lab::recipe::{generate_dataset, read_recipe};
use sot3d_lab::{LabError, Result};

#[derive(Parser)]
#[command(name = "sot3d", version, about = "9DoF single object tracking lab on synthetic point clouds")]
struct Cli {
    /// Worker threads; 1 gives bit-identical outputs across runs.
    #[arg(long, global = true, env = "SOT3D_JOBS", default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tracker {
    Prot3d,
    Static,
    Centroid,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Stages,
    Memory,
}

#[derive(Clone, Copy, ValueEnum)]
enum Subset {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset from a recipe.
    Gen {
        #[arg(long)]
        recipe: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a stratified train/test split of a dataset.
    Split {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to DIR/split.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check sequence directories and list every violation.
    Validate {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Train the tracker on the train split.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Tracker config JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run a tracker over a split and write one result file per sequence.
    Track {
        #[arg(long, value_enum)]
        tracker: Tracker,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        subset: Subset,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score result files against ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        subset: Subset,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate over the stage-count or memory-size grid.
    Ablate {
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge evaluation reports into one comparison table.
    Report {
        /// `name=path/to/report.json`, repeatable.
        #[arg(long = "run", required = true)]
        runs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p).map_err(|e| LabError::io(p, e))?;
    }
    std::fs::write(path, text).map_err(|e| LabError::io(path, e))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_config(path: Option<&Path>, epochs: Option<usize>) -> Result<(TrackerConfig, Option<String>)> {
    let (mut cfg, hash) = match path {
        None => (TrackerConfig::default(), None),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| LabError::io(p, e))?;
            let cfg: TrackerConfig = serde_json::from_str(&text).map_err(|e| LabError::format(p, e.to_string()))?;
            (cfg, Some(sha256_hex(text.as_bytes())))
        }
    };
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok((cfg, hash))
}

fn subset_ids(split: &Path, subset: Subset) -> Result<Vec<String>> {
    let m = read_split(split)?;
    Ok(match subset {
        Subset::Train => m.train,
        Subset::Test => m.test,
    })
}

/// `name.ext` → `name.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn run(cli: Cli) -> Result<()> {
    let jobs = cli.jobs.max(1);
    let mut manifest;
    match cli.cmd {
        Cmd::Gen { recipe, out, seed } => {
            let r = read_recipe(&recipe)?;
            let ids = generate_dataset(&r, &out, seed)?;
            manifest = RunManifest::new("gen", jobs);
            manifest.seed = Some(seed);
            manifest.recipe_sha256 = Some(sha256_hex(&std::fs::read(&recipe).map_err(|e| LabError::io(&recipe, e))?));
            manifest.outputs = ids;
            manifest.write(&out.join("gen_manifest.json"))?;
            println!("generated {} sequences under {}", manifest.outputs.len(), out.display());
        }
        Cmd::Split { dir, fraction, seed, out } => {
            let data = Dataset::open(&dir)?;
            let split = make_split(&data.labels(), fraction, seed)?;
            for w in &split.warnings {
                eprintln!("warning: {w}");
            }
            let out = out.unwrap_or_else(|| dir.join("split.json"));
            write_text(&out, &encode_split(&split.manifest))?;
            println!("{} train / {} test -> {}", split.manifest.train.len(), split.manifest.test.len(), out.display());
            return Ok(());
        }
        Cmd::Validate { dir } => {
            let dirs = if dir.join("meta.json").is_file() { vec![dir.clone()] } else { sot3d_lab::dataio::list_sequences(&dir)? };
            let mut bad = 0;
            for d in &dirs {
                for v in validate_sequence(d) {
                    println!("{}: {v}", d.display());
                    bad += 1;
                }
            }
            if bad > 0 {
                return Err(LabError::format(&dir, format!("{bad} violations")));
            }
            println!("{} sequences valid", dirs.len());
            return Ok(());
        }
        Cmd::Train { data, split, config, out, seed, epochs } => {
            let (cfg, hash) = load_config(config.as_deref(), epochs)?;
            let ds = Dataset::open(&data)?;
            let ids = subset_ids(&split, Subset::Train)?;
            let seqs = ds.select(&ids)?;
            let (ckpt, log) = train_on(&seqs, &cfg, seed, |l| {
                eprintln!("epoch {:>3}  loss {:.5}  ({:.1}s)", l.epoch, l.loss.total, l.wall_time_s);
            })?;
            write_checkpoint(&ckpt, &out)?;
            write_text(&sibling(&out, "log.jsonl"), &encode_train_log(&log, true))?;
            manifest = RunManifest::new("train", jobs);
            manifest.seed = Some(seed);
            manifest.config_sha256.insert("tracker_config".into(), config_hash(&cfg));
            if let Some(h) = hash {
                manifest.config_sha256.insert("config_file".into(), h);
            }
            manifest.outputs = vec![out.display().to_string()];
            manifest.write(&sibling(&out, "manifest.json"))?;
        }
        Cmd::Track { tracker, ckpt, data, split, subset, out } => {
            let kind = match tracker {
                Tracker::Prot3d => TrackerKind::Prot3d,
                Tracker::Static => TrackerKind::Static,
                Tracker::Centroid => TrackerKind::Centroid,
            };
            let ck = ckpt.as_deref().map(read_checkpoint).transpose()?;
            let ds = Dataset::open(&data)?;
            let ids = subset_ids(&split, subset)?;
            let tracked = track_all(kind, ck.as_ref(), &ds.select(&ids)?)?;
            let paths = write_results_dir(&out, &tracked)?;
            manifest = RunManifest::new(&format!("track {}", kind.name()), jobs);
            if let Some(c) = &ck {
                manifest.config_sha256.insert("tracker_config".into(), config_hash(&c.config));
            }
            manifest.sequence_seconds = tracked.iter().map(|t| (t.result.id.clone(), t.seconds)).collect();
            manifest.outputs = paths.iter().map(|p| p.display().to_string()).collect();
            manifest.write(&out.join("manifest.json"))?;
            println!("tracked {} sequences -> {}", tracked.len(), out.display());
        }
        Cmd::Eval { results, data, split, subset, out } => {
            let ds = Dataset::open(&data)?;
            let ids = subset_ids(&split, subset)?;
            let res = read_results_dir(&results, &ids)?;
            let report = evaluate(&res, &ds.select(&ids)?)?;
            write_text(&out, &to_json(&report))?;
            // title by directory name only, so the table does not depend on where the run lives
            let name = results.file_name().map_or_else(|| results.display().to_string(), |n| n.to_string_lossy().into_owned());
            let table = format_report(&format!("results: {name}"), &report);
            write_text(&sibling(&out, "txt"), &table)?;
            print!("{table}");
            manifest = RunManifest::new("eval", jobs);
            manifest.outputs = vec![out.display().to_string()];
            manifest.write(&sibling(&out, "manifest.json"))?;
        }
        Cmd::Ablate { axis, data, split, config, seed, epochs, out } => {
            let (cfg, _) = load_config(config.as_deref(), epochs)?;
            let axis = match axis {
                Axis::Stages => AblationAxis::Stages,
                Axis::Memory => AblationAxis::Memory,
            };
            let ds = Dataset::open(&data)?;
            let m = read_split(&split)?;
            let table = ablate(axis, &ds.select(&m.train)?, &ds.select(&m.test)?, &cfg, seed)?;
            write_text(&out, &to_json(&table))?;
            let text = format_ablation(&table);
            write_text(&sibling(&out, "txt"), &text)?;
            print!("{text}");
            manifest = RunManifest::new("ablate", jobs);
            manifest.seed = Some(seed);
            manifest.config_sha256.insert("base_config".into(), config_hash(&cfg));
            manifest.outputs = vec![out.display().to_string()];
            manifest.write(&sibling(&out, "manifest.json"))?;
        }
        Cmd::Report { runs, out } => {
            let mut reports = Vec::new();
            for r in &runs {
                let (name, path) = r
                    .split_once('=')
                    .ok_or_else(|| LabError::Usage(format!("--run expects name=path, got {r}")))?;
                let path = Path::new(path);
                let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
                let rep: MetricsReport = serde_json::from_str(&text).map_err(|e| LabError::format(path, e.to_string()))?;
                reports.push((name.to_string(), rep));
            }
            let rows = compare(&reports);
            write_text(&out, &to_json(&rows))?;
            let text = format_comparison(&rows);
            write_text(&sibling(&out, "txt"), &text)?;
            print!("{text}");
            return Ok(());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.jobs.max(1);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {jobs} worker threads: {e}");
            return ExitCode::from(3);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
