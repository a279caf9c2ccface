use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::split::{kfold_split, FoldAssignment};
use crate::domain::{label_at, ClassLabel, DatasetManifest, ManifestEntry};
use crate::ensemble::{combine, train_ensemble, Ensemble, DEFAULT_SEEDS};
use crate::error::{Error, Result};
use crate::featstore::{load_features, FeatureSequence};
use crate::metrics::{aggregate, evaluate_video, AggregateEval, EvalReport, TripleSummary, VideoEval};
use crate::tcn::{build_windows, ArchConfig, Normalizer, TrainConfig};

/// Feature sequence of one video with the ground-truth label at each chunk center.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVideo {
    pub id: String,
    pub features: FeatureSequence,
    pub labels: Vec<ClassLabel>,
}

pub fn load_video(manifest: &DatasetManifest, entry: &ManifestEntry) -> Result<LabeledVideo> {
    let features = load_features(manifest.resolve(&entry.features))?;
    let track = manifest.load_annotations(entry)?;
    let labels = features
        .centers()
        .iter()
        .map(|&c| label_at(&track, c))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::validation(format!("{}: {e}", entry.meta.id)))?;
    Ok(LabeledVideo {
        id: entry.meta.id.clone(),
        features,
        labels,
    })
}

/// Everything needed to rerun a cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub split_seed: u64,
    pub k: usize,
    /// Generator config and seed of a synthetic corpus, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<serde_json::Value>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            seeds: DEFAULT_SEEDS.to_vec(),
            split_seed: 0,
            k: 5,
            synth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedVideo {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberLoss {
    pub seed: u64,
    pub final_loss: f64,
}

/// Ids whose data reached the normalizer and the training windows; the audit
/// passes when neither list meets the test section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub normalizer_ids: Vec<String>,
    pub window_ids: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub audit: LeakageAudit,
    pub skipped: Vec<SkippedVideo>,
    pub n_windows: usize,
    pub members: Vec<MemberLoss>,
    pub eval: EvalReport,
}

/// Single-model metrics pooled over every test video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSummary {
    pub seed: u64,
    pub knot_level: Option<TripleSummary>,
    pub action: TripleSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub config: CvConfig,
    pub split: FoldAssignment,
    pub folds: Vec<FoldReport>,
    /// Per-video evaluations ordered by fold, then id.
    pub pooled: Vec<VideoEval>,
    pub overall: AggregateEval,
    pub members: Vec<MemberSummary>,
}

fn labels_to_classes(preds: &[usize]) -> Vec<ClassLabel> {
    preds
        .iter()
        .map(|&c| ClassLabel::from_index(c).expect("model emits valid classes"))
        .collect()
}

fn run_fold(
    fold: usize,
    split: &FoldAssignment,
    videos: &BTreeMap<String, LabeledVideo>,
    cfg: &CvConfig,
    member_evals: &mut [Vec<VideoEval>],
) -> Result<FoldReport> {
    let train_ids = split.train_ids(fold);
    let test_ids = split.folds[fold].clone();
    let context = cfg.arch.context_len();

    let mut skipped = Vec::new();
    let mut used = Vec::new();
    for id in &train_ids {
        let v = &videos[id];
        if v.features.len() < context {
            let reason = format!(
                "{} chunks, shorter than the {context}-chunk context window",
                v.features.len()
            );
            log::warn!("fold {fold}: skipping training video {id}: {reason}");
            skipped.push(SkippedVideo {
                id: id.clone(),
                reason,
            });
        } else {
            used.push(v);
        }
    }
    if used.is_empty() {
        return Err(Error::validation(format!(
            "fold {fold}: no usable training video"
        )));
    }

    let normalizer = Normalizer::fit(used.iter().map(|v| &v.features))?;
    let mut windows = Vec::new();
    for v in &used {
        let targets: Vec<usize> = v.labels.iter().map(|l| l.index()).collect();
        windows.extend(build_windows(&normalizer.apply(&v.features)?, &targets, context)?);
    }
    let used_ids: Vec<String> = used.iter().map(|v| v.id.clone()).collect();
    let audit = LeakageAudit {
        passed: used_ids.iter().all(|id| !test_ids.contains(id)),
        normalizer_ids: used_ids.clone(),
        window_ids: used_ids,
    };
    log::info!("fold {fold}: {} training windows", windows.len());

    let (ensemble, histories) = train_ensemble(&windows, &cfg.arch, &cfg.train, &cfg.seeds, normalizer)?;
    let members = ensemble
        .seeds()
        .into_iter()
        .zip(&histories)
        .map(|(seed, h)| MemberLoss {
            seed,
            final_loss: *h.last().expect("at least one epoch"),
        })
        .collect();

    let mut per_video = Vec::with_capacity(test_ids.len());
    for id in &test_ids {
        let v = &videos[id];
        let (eval, member_vid) = evaluate_with(&ensemble, v)?;
        per_video.push(eval);
        for (acc, e) in member_evals.iter_mut().zip(member_vid) {
            acc.push(e);
        }
    }

    Ok(FoldReport {
        fold,
        train_ids,
        test_ids,
        audit,
        skipped,
        n_windows: windows.len(),
        members,
        eval: EvalReport::new(per_video)?,
    })
}

fn evaluate_with(ensemble: &Ensemble, v: &LabeledVideo) -> Result<(VideoEval, Vec<VideoEval>)> {
    let preds = ensemble.member_predictions(&v.features)?;
    let timeline = combine(&preds)?;
    let eval = evaluate_video(
        &v.id,
        &v.labels,
        &labels_to_classes(&timeline.labels),
        &timeline.probs,
    )?;
    let members = preds
        .iter()
        .map(|p| evaluate_video(&v.id, &v.labels, &labels_to_classes(&p.labels), &p.probs))
        .collect::<Result<Vec<_>>>()?;
    Ok((eval, members))
}

/// Video-level k-fold cross-validation of seed ensembles.
pub fn run_cv(manifest: &DatasetManifest, cfg: &CvConfig) -> Result<CvReport> {
    cfg.arch.validate()?;
    cfg.train.validate()?;
    let split = kfold_split(&manifest.ids(), cfg.k, cfg.split_seed)?;

    let mut videos = BTreeMap::new();
    for entry in &manifest.videos {
        let v = load_video(manifest, entry)?;
        if v.features.dim() != cfg.arch.input_dim {
            return Err(Error::validation(format!(
                "{}: feature dim {} but arch input_dim {}",
                v.id,
                v.features.dim(),
                cfg.arch.input_dim
            )));
        }
        videos.insert(v.id.clone(), v);
    }

    let mut member_evals = vec![Vec::new(); cfg.seeds.len()];
    let folds = (0..cfg.k)
        .map(|f| run_fold(f, &split, &videos, cfg, &mut member_evals))
        .collect::<Result<Vec<_>>>()?;

    let pooled: Vec<VideoEval> = folds
        .iter()
        .flat_map(|f| f.eval.per_video.iter().cloned())
        .collect();
    let overall = aggregate(&pooled)?;
    let members = cfg
        .seeds
        .iter()
        .zip(&member_evals)
        .map(|(&seed, evals)| {
            let agg = aggregate(evals)?;
            Ok(MemberSummary {
                seed,
                knot_level: agg.knot_level,
                action: agg.action,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CvReport {
        config: cfg.clone(),
        split,
        folds,
        pooled,
        overall,
        members,
    })
}
