//! Synthetic corpus: a sticky Markov chain over the twelve classes emits one
//! noisy class-mean vector per chunk.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{load_features, save_features, FeatureSequence};
use crate::domain::{
    chunk_labels, chunk_video, AnnotationTrack, ClassLabel, DatasetManifest, Interval, ManifestEntry,
    VideoMeta, DEFAULT_CHUNK_LEN, DEFAULT_CHUNK_STRIDE, N_CLASSES, N_LEVELS,
};
use crate::error::{Error, Result};

/// Student levels of the 35 recorded videos, in table order; synthetic videos cycle through them.
pub const TABLE_I_LEVELS: [&str; 35] = [
    "MS3", "MS3", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4",
    "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "MS4", "PGY1",
    "PGY4", "PGY4", "PGY4", "PGY5", "PGY5", "PGY5",
];

/// Shortest synthetic video: one full default context window.
const MIN_CHUNKS: usize = 31;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_videos: usize,
    /// Inclusive `[min, max]` number of chunks per video.
    pub chunks_per_video: [usize; 2],
    pub dim: usize,
    pub class_means_seed: u64,
    pub noise_sigma: f64,
    pub stay_prob: f64,
    /// Probabilities of Good, Okay, Bad.
    pub level_mix: [f64; 3],
    pub chunk_len: u64,
    pub chunk_stride: u64,
    pub fps: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_videos: 35,
            chunks_per_video: [128, 384],
            dim: 32,
            class_means_seed: 7,
            noise_sigma: 0.45,
            stay_prob: 0.95,
            level_mix: [0.4, 0.3, 0.3],
            chunk_len: DEFAULT_CHUNK_LEN,
            chunk_stride: DEFAULT_CHUNK_STRIDE,
            fps: 30.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::validation(format!("synth config: {msg}")));
        if self.n_videos == 0 {
            return bad("n_videos must be >= 1".into());
        }
        let [lo, hi] = self.chunks_per_video;
        if lo < MIN_CHUNKS || lo > hi {
            return bad(format!(
                "chunks_per_video [{lo}, {hi}] must satisfy {MIN_CHUNKS} <= min <= max"
            ));
        }
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!(
                "noise_sigma {} must be finite and >= 0",
                self.noise_sigma
            ));
        }
        if !(0.0..=1.0).contains(&self.stay_prob) {
            return bad(format!("stay_prob {} outside [0, 1]", self.stay_prob));
        }
        if self.level_mix.iter().any(|p| !(p.is_finite() && *p >= 0.0))
            || (self.level_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad(format!(
                "level_mix {:?} must be a probability triple",
                self.level_mix
            ));
        }
        if self.chunk_len == 0 || self.chunk_stride == 0 {
            return bad("chunk geometry must be positive".into());
        }
        if !(1.0..=240.0).contains(&self.fps) {
            return bad(format!("fps {} outside [1, 240]", self.fps));
        }
        Ok(())
    }
}

/// Unit-norm per-class mean vectors drawn from `class_means_seed`.
pub fn class_means(cfg: &SynthConfig) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.class_means_seed);
    let mut means: Vec<Vec<f32>> = Vec::with_capacity(N_CLASSES);
    while means.len() < N_CLASSES {
        let v: Vec<f64> = (0..cfg.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue;
        }
        let v: Vec<f32> = v.iter().map(|x| (x / norm) as f32).collect();
        if means.iter().all(|m| *m != v) {
            means.push(v);
        }
    }
    means
}

/// Index of the closest class mean for every row.
pub fn nearest_mean_decode(seq: &FeatureSequence, means: &[Vec<f32>]) -> Vec<usize> {
    seq.rows()
        .map(|row| {
            let dist = |m: &Vec<f32>| -> f64 {
                row.iter()
                    .zip(m)
                    .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
                    .sum()
            };
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, m) in means.iter().enumerate() {
                let d = dist(m);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

/// Fraction of chunks whose annotated class equals the nearest class mean.
pub fn nearest_mean_accuracy(cfg: &SynthConfig, manifest: &DatasetManifest) -> Result<f64> {
    let means = class_means(cfg);
    let mut hits = 0usize;
    let mut total = 0usize;
    for entry in &manifest.videos {
        let seq = load_features(manifest.resolve(&entry.features))?;
        if seq.dim() != cfg.dim {
            return Err(Error::validation(format!(
                "{}: feature dim {} does not match config dim {}",
                entry.meta.id,
                seq.dim(),
                cfg.dim
            )));
        }
        let track = manifest.load_annotations(entry)?;
        let decoded = nearest_mean_decode(&seq, &means);
        for (&center, &pred) in seq.centers().iter().zip(&decoded) {
            let truth = crate::domain::label_at(&track, center)?;
            hits += usize::from(truth.index() == pred);
            total += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest: DatasetManifest,
    pub manifest_path: PathBuf,
    /// Generating class index of every chunk, per video.
    pub hidden: Vec<Vec<usize>>,
}

fn draw_class(rng: &mut ChaCha8Rng, level_mix: &[f64; 3], exclude: Option<usize>) -> usize {
    let weight = |c: usize| -> f64 {
        if Some(c) == exclude {
            0.0
        } else {
            level_mix[c % N_LEVELS]
        }
    };
    let total: f64 = (0..N_CLASSES).map(weight).sum();
    if total <= 0.0 {
        // every other class has zero weight: fall back to uniform over the rest
        let candidates: Vec<usize> = (0..N_CLASSES).filter(|c| Some(*c) != exclude).collect();
        return candidates[rng.random_range(0..candidates.len())];
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for c in 0..N_CLASSES {
        let w = weight(c);
        if w <= 0.0 {
            continue;
        }
        last = c;
        if u < w {
            return c;
        }
        u -= w;
    }
    last
}

fn hidden_sequence(rng: &mut ChaCha8Rng, cfg: &SynthConfig, len: usize) -> Vec<usize> {
    let mut seq = Vec::with_capacity(len);
    let mut current = draw_class(rng, &cfg.level_mix, None);
    seq.push(current);
    for _ in 1..len {
        if rng.random::<f64>() >= cfg.stay_prob {
            current = draw_class(rng, &cfg.level_mix, Some(current));
        }
        seq.push(current);
    }
    seq
}

/// Intervals switch label midway between the centers of differently labeled chunks.
fn track_for(classes: &[usize], centers: &[u64], frame_count: u64) -> Result<AnnotationTrack> {
    let mut intervals: Vec<Interval> = Vec::new();
    for (t, (&class, &center)) in classes.iter().zip(centers).enumerate() {
        let label = ClassLabel::from_index(class)?;
        match intervals.last_mut() {
            Some(last) if last.label == label => {}
            Some(last) => {
                let start = (centers[t - 1] + center).div_ceil(2).max(centers[t - 1] + 1);
                last.end_frame = start - 1;
                intervals.push(Interval {
                    start_frame: start,
                    end_frame: 0,
                    label,
                });
            }
            None => intervals.push(Interval {
                start_frame: 0,
                end_frame: 0,
                label,
            }),
        }
    }
    if let Some(last) = intervals.last_mut() {
        last.end_frame = frame_count - 1;
    }
    AnnotationTrack::new(intervals, frame_count)
}

/// Generator config and seed, written next to the manifest.
pub const SYNTH_ECHO_FILE: &str = "synth.json";

/// Writes `manifest.json`, `synth.json`, `features/*.ktfv` and
/// `annotations/*.csv` under `out_dir`.
pub fn synth_dataset(cfg: &SynthConfig, seed: u64, out_dir: impl AsRef<Path>) -> Result<SynthOutput> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let feat_dir = out_dir.join("features");
    let ann_dir = out_dir.join("annotations");
    for dir in [&feat_dir, &ann_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let means = class_means(cfg);
    let [lo, hi] = cfg.chunks_per_video;
    let mut entries = Vec::with_capacity(cfg.n_videos);
    let mut hidden = Vec::with_capacity(cfg.n_videos);
    for v in 0..cfg.n_videos {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(v as u64 + 1);

        let t = rng.random_range(lo..=hi);
        let frame_count = (t as u64 - 1) * cfg.chunk_stride + cfg.chunk_len;
        let chunks = chunk_video(frame_count, cfg.chunk_len, cfg.chunk_stride)?;
        debug_assert_eq!(chunks.len(), t);
        let centers: Vec<u64> = chunks.iter().map(|c| c.center_frame).collect();

        let classes = hidden_sequence(&mut rng, cfg, t);
        let mut vectors = Vec::with_capacity(t * cfg.dim);
        for &c in &classes {
            for &mu in &means[c] {
                let eps: f64 = StandardNormal.sample(&mut rng);
                vectors.push((mu as f64 + cfg.noise_sigma * eps) as f32);
            }
        }
        let seq = FeatureSequence::new(cfg.dim, vectors, centers.clone())?;
        let track = track_for(&classes, &centers, frame_count)?;
        debug_assert_eq!(
            chunk_labels(&track, &chunks)?
                .iter()
                .map(|l| l.index())
                .collect::<Vec<_>>(),
            classes
        );

        let id = format!("synth_{v:03}");
        let feat_rel = PathBuf::from("features").join(format!("{id}.ktfv"));
        let ann_rel = PathBuf::from("annotations").join(format!("{id}.csv"));
        save_features(&seq, out_dir.join(&feat_rel))?;
        let ann_path = out_dir.join(&ann_rel);
        fs::write(&ann_path, track.to_csv()).map_err(|e| Error::io(&ann_path, e))?;

        entries.push(ManifestEntry {
            meta: VideoMeta {
                id,
                student_level: TABLE_I_LEVELS[v % TABLE_I_LEVELS.len()].to_string(),
                fps: cfg.fps,
                frame_count,
            },
            annotations: ann_rel,
            features: feat_rel,
        });
        hidden.push(classes);
    }

    let manifest = DatasetManifest::new(entries, out_dir)?;
    let manifest_path = out_dir.join("manifest.json");
    manifest.save(&manifest_path)?;
    let echo = serde_json::json!({ "seed": seed, "config": cfg });
    let echo_path = out_dir.join(SYNTH_ECHO_FILE);
    let text = serde_json::to_string_pretty(&echo).expect("config serializes") + "\n";
    fs::write(&echo_path, text).map_err(|e| Error::io(&echo_path, e))?;
    Ok(SynthOutput {
        manifest,
        manifest_path,
        hidden,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::parse_annotations;

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            n_videos: 4,
            chunks_per_video: [31, 50],
            dim: 8,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn noiseless_nearest_mean_recovers_hidden_classes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            ..small_cfg()
        };
        let out = synth_dataset(&cfg, 3, dir.path()).unwrap();
        let means = class_means(&cfg);
        for (entry, hidden) in out.manifest.videos.iter().zip(&out.hidden) {
            let seq = load_features(out.manifest.resolve(&entry.features)).unwrap();
            assert_eq!(&nearest_mean_decode(&seq, &means), hidden);
        }
        assert_eq!(nearest_mean_accuracy(&cfg, &out.manifest).unwrap(), 1.0);
    }

    #[test]
    fn absorbing_chain_gives_constant_videos() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            stay_prob: 1.0,
            ..small_cfg()
        };
        let out = synth_dataset(&cfg, 9, dir.path()).unwrap();
        for hidden in &out.hidden {
            assert!(hidden.iter().all(|c| *c == hidden[0]));
        }
    }

    #[test]
    fn byte_identical_regeneration() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let cfg = small_cfg();
        let oa = synth_dataset(&cfg, 11, a.path()).unwrap();
        synth_dataset(&cfg, 11, b.path()).unwrap();
        for e in &oa.manifest.videos {
            for rel in [&e.features, &e.annotations] {
                assert_eq!(
                    fs::read(a.path().join(rel)).unwrap(),
                    fs::read(b.path().join(rel)).unwrap()
                );
            }
        }
        assert_eq!(
            fs::read(a.path().join("manifest.json")).unwrap(),
            fs::read(b.path().join("manifest.json")).unwrap()
        );
    }

    #[test]
    fn generated_annotations_validate_and_match_hidden() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            stay_prob: 0.5,
            ..small_cfg()
        };
        let out = synth_dataset(&cfg, 5, dir.path()).unwrap();
        let reloaded = DatasetManifest::load(&out.manifest_path).unwrap();
        for (entry, hidden) in reloaded.videos.iter().zip(&out.hidden) {
            let text = fs::read_to_string(reloaded.resolve(&entry.annotations)).unwrap();
            let track = parse_annotations(&text, entry.meta.frame_count).unwrap();
            let chunks = chunk_video(entry.meta.frame_count, cfg.chunk_len, cfg.chunk_stride).unwrap();
            let labels: Vec<usize> = chunk_labels(&track, &chunks)
                .unwrap()
                .iter()
                .map(|l| l.index())
                .collect();
            assert_eq!(&labels, hidden);
        }
    }

    #[test]
    fn class_means_are_unit_and_distinct() {
        let means = class_means(&SynthConfig::default());
        assert_eq!(means.len(), N_CLASSES);
        for (i, m) in means.iter().enumerate() {
            let norm: f64 = m.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
            assert!(means[..i].iter().all(|o| o != m));
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        let base = SynthConfig::default();
        for cfg in [
            SynthConfig {
                chunks_per_video: [30, 40],
                ..base.clone()
            },
            SynthConfig {
                chunks_per_video: [50, 40],
                ..base.clone()
            },
            SynthConfig {
                level_mix: [0.5, 0.5, 0.1],
                ..base.clone()
            },
            SynthConfig {
                stay_prob: 1.5,
                ..base.clone()
            },
            SynthConfig {
                noise_sigma: -1.0,
                ..base.clone()
            },
            SynthConfig {
                n_videos: 0,
                ..base.clone()
            },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        let parsed: SynthConfig = serde_json::from_str(r#"{"n_videos": 3}"#).unwrap();
        assert_eq!(parsed.n_videos, 3);
        assert_eq!(parsed.dim, base.dim);
        assert!(serde_json::from_str::<SynthConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
