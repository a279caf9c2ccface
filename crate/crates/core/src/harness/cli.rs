use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{load_video, run_cv, CvConfig, CvReport};
use crate::domain::{label_at, Action, ClassLabel, DatasetManifest, Level, N_CLASSES};
use crate::ensemble::{train_ensemble, Ensemble, Timeline, DEFAULT_SEEDS};
use crate::error::{Error, Result};
use crate::featstore::{load_features, synth_dataset, SynthConfig, SYNTH_ECHO_FILE};
use crate::metrics::{evaluate_video, render_tables, EvalReport, MemberRow};
use crate::tcn::{build_windows, grad_check, init_model, ArchConfig, Normalizer, TrainConfig, WindowSample};

/// Gradient checks at or above this relative discrepancy fail.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-3;
const GRAD_CHECK_EPSILON: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "knotrate", version, about = "Rate knot-tying videos chunk by chunk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with manifest.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a seed ensemble on every video of a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        arch: Option<PathBuf>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the per-chunk timeline of one feature file as CSV.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score stored `<id>.csv` predictions against a manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate seed ensembles.
    Cv {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        arch: Option<PathBuf>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic and finite-difference gradients of a fresh model.
    Gradcheck {
        #[arg(long)]
        arch: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the tables of a cross-validation report.
    Report {
        #[arg(long)]
        cv: PathBuf,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json_or_default<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), |p| read_json(p))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::validation(format!("{}: {other:?}", path.display())),
    }
}

/// `center_frame,action,level,p0..p11`, one row per chunk.
pub fn write_timeline_csv(centers: &[u64], timeline: &Timeline, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["center_frame".to_string(), "action".into(), "level".into()];
    header.extend((0..N_CLASSES).map(|c| format!("p{c}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for ((center, &label), probs) in centers.iter().zip(&timeline.labels).zip(&timeline.probs) {
        let class = ClassLabel::from_index(label)?;
        let mut rec = vec![
            center.to_string(),
            class.action.to_string(),
            class.level.to_string(),
        ];
        rec.extend(probs.iter().map(|p| p.to_string()));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Inverse of [`write_timeline_csv`]: centers, labels and probability rows.
pub fn read_timeline_csv(path: &Path) -> Result<(Vec<u64>, Vec<ClassLabel>, Vec<[f64; N_CLASSES]>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut expected = vec!["center_frame".to_string(), "action".into(), "level".into()];
    expected.extend((0..N_CLASSES).map(|c| format!("p{c}")));
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::validation(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    let (mut centers, mut labels, mut probs) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let bad = |what: &str| Error::validation(format!("{} row {}: bad {what}", path.display(), i + 1));
        let center: u64 = rec[0].parse().map_err(|_| bad("center_frame"))?;
        if centers.last().is_some_and(|&c| c >= center) {
            return Err(bad("center_frame order"));
        }
        let action: Action = rec[1].parse()?;
        let level: Level = rec[2].parse()?;
        let mut row = [0.0f64; N_CLASSES];
        for (c, p) in row.iter_mut().enumerate() {
            *p = rec[3 + c].parse().map_err(|_| bad("probability"))?;
            if !p.is_finite() {
                return Err(bad("probability"));
            }
        }
        centers.push(center);
        labels.push(ClassLabel::new(action, level));
        probs.push(row);
    }
    Ok((centers, labels, probs))
}

/// Echoed generator settings of a synthetic corpus next to `manifest`, if any.
fn synth_echo(manifest: &Path) -> Result<Option<serde_json::Value>> {
    let path = manifest.with_file_name(SYNTH_ECHO_FILE);
    if path.exists() {
        read_json(&path).map(Some)
    } else {
        Ok(None)
    }
}

fn gradcheck_sample(arch: &ArchConfig, seed: u64) -> WindowSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    WindowSample {
        window: (0..arch.context_len() * arch.input_dim)
            .map(|_| rng.random_range(-1.5f32..1.5))
            .collect(),
        target: rng.random_range(0..N_CLASSES),
    }
}

/// Max relative discrepancy of a fresh model at `seed` on a seeded random window.
pub fn gradcheck(arch: &ArchConfig, seed: u64) -> Result<f64> {
    let model = init_model(arch, seed)?;
    grad_check(&model, &gradcheck_sample(arch, seed), GRAD_CHECK_EPSILON)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, seed, out } => {
            let cfg: SynthConfig = read_json_or_default(config.as_ref())?;
            let output = synth_dataset(&cfg, seed, &out)?;
            println!(
                "wrote {} videos to {}",
                output.manifest.videos.len(),
                output.manifest_path.display()
            );
        }
        Command::Train {
            manifest,
            arch,
            train,
            seeds,
            out,
        } => {
            let arch: ArchConfig = read_json_or_default(arch.as_ref())?;
            let cfg: TrainConfig = read_json_or_default(train.as_ref())?;
            let seeds = seeds.unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
            let manifest = DatasetManifest::load(&manifest)?;
            let mut videos = Vec::new();
            for entry in &manifest.videos {
                let v = load_video(&manifest, entry)?;
                if v.features.len() < arch.context_len() {
                    log::warn!("skipping {}: shorter than the context window", v.id);
                    continue;
                }
                videos.push(v);
            }
            if videos.is_empty() {
                return Err(Error::validation("no video is long enough to train on"));
            }
            let normalizer = Normalizer::fit(videos.iter().map(|v| &v.features))?;
            let mut windows = Vec::new();
            for v in &videos {
                let targets: Vec<usize> = v.labels.iter().map(|l| l.index()).collect();
                windows.extend(build_windows(
                    &normalizer.apply(&v.features)?,
                    &targets,
                    arch.context_len(),
                )?);
            }
            let (ensemble, histories) = train_ensemble(&windows, &arch, &cfg, &seeds, normalizer)?;
            ensemble.save(&out)?;
            for (seed, h) in seeds.iter().zip(&histories) {
                println!(
                    "seed {seed}: final loss {:.6}",
                    h.last().expect("at least one epoch")
                );
            }
        }
        Command::Predict { ckpt, features, out } => {
            let ensemble = Ensemble::load(&ckpt)?;
            let seq = load_features(&features)?;
            let timeline = ensemble.predict_timeline(&seq)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            write_timeline_csv(seq.centers(), &timeline, &out)?;
        }
        Command::Eval {
            manifest,
            pred_dir,
            out,
        } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let mut entries: Vec<_> = manifest.videos.iter().collect();
            entries.sort_by(|a, b| a.meta.id.cmp(&b.meta.id));
            let mut per_video = Vec::with_capacity(entries.len());
            for entry in entries {
                let path = pred_dir.join(format!("{}.csv", entry.meta.id));
                let (centers, pred, probs) = read_timeline_csv(&path)?;
                let track = manifest.load_annotations(entry)?;
                let gt = centers
                    .iter()
                    .map(|&c| label_at(&track, c))
                    .collect::<Result<Vec<_>>>()?;
                per_video.push(evaluate_video(&entry.meta.id, &gt, &pred, &probs)?);
            }
            let report = EvalReport::new(per_video)?;
            write_json(&report, &out)?;
            print!("{}", render_tables(&report.aggregate, &[]));
        }
        Command::Cv {
            manifest,
            arch,
            train,
            seeds,
            split_seed,
            k,
            out,
        } => {
            let cfg = CvConfig {
                arch: read_json_or_default(arch.as_ref())?,
                train: read_json_or_default(train.as_ref())?,
                seeds: seeds.unwrap_or_else(|| DEFAULT_SEEDS.to_vec()),
                split_seed,
                k,
                synth: synth_echo(&manifest)?,
            };
            let manifest = DatasetManifest::load(&manifest)?;
            let report = run_cv(&manifest, &cfg)?;
            write_json(&report, &out)?;
            print!("{}", render_report(&report));
        }
        Command::Gradcheck { arch, seed } => {
            let arch: ArchConfig = read_json_or_default(arch.as_ref())?;
            let d = gradcheck(&arch, seed)?;
            println!("max relative discrepancy: {d:.3e}");
            if !(d < GRAD_CHECK_TOLERANCE) {
                return Err(Error::Numeric(format!(
                    "gradient check failed: {d:.3e} >= {GRAD_CHECK_TOLERANCE:e}"
                )));
            }
        }
        Command::Report { cv } => {
            let report: CvReport = read_json(&cv)?;
            print!("{}", render_report(&report));
        }
    }
    Ok(())
}

pub fn render_report(report: &CvReport) -> String {
    let rows: Vec<MemberRow> = report
        .members
        .iter()
        .map(|m| MemberRow {
            seed: m.seed,
            knot_level: m.knot_level,
        })
        .collect();
    render_tables(&report.overall, &rows)
}
