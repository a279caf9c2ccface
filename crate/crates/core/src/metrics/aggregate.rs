use serde::{Deserialize, Serialize};

use super::{action_eval, knot_level_eval, mean_precision_score, MetricTriple, WeightedMetrics};
use crate::domain::{Action, ClassLabel, N_CLASSES};
use crate::error::{Error, Result};

/// Weighted metrics of one task plus the per-class supports behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEval {
    #[serde(flatten)]
    pub metrics: MetricTriple,
    pub supports: Vec<usize>,
}

impl<L> From<WeightedMetrics<L>> for TaskEval {
    fn from(w: WeightedMetrics<L>) -> Self {
        TaskEval {
            supports: w.supports(),
            metrics: w.weighted,
        }
    }
}

/// Evaluation of one test video. Knot tasks are `None` when the video has no
/// ground-truth position of the corresponding action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEval {
    pub video_id: String,
    pub n_positions: usize,
    pub knot_level: Option<TaskEval>,
    pub tying_level: Option<TaskEval>,
    pub pushing_level: Option<TaskEval>,
    pub action: TaskEval,
    pub mean_precision_score: Option<f64>,
}

fn optional<T>(r: Result<T>, has_positions: bool) -> Result<Option<T>> {
    if has_positions {
        r.map(Some)
    } else {
        Ok(None)
    }
}

pub fn evaluate_video(
    video_id: &str,
    gt: &[ClassLabel],
    pred: &[ClassLabel],
    probs: &[[f64; N_CLASSES]],
) -> Result<VideoEval> {
    if gt.len() != pred.len() || gt.len() != probs.len() {
        return Err(Error::validation(format!(
            "video {video_id}: {} labels, {} predictions, {} probability rows",
            gt.len(),
            pred.len(),
            probs.len()
        )));
    }
    let has = |actions: &[Action]| gt.iter().any(|l| actions.contains(&l.action));
    let knot = Action::KNOT_RELATED;
    let tying = [Action::TyingKnot];
    let pushing = [Action::PushingKnot];
    Ok(VideoEval {
        video_id: video_id.to_owned(),
        n_positions: gt.len(),
        knot_level: optional(knot_level_eval(gt, pred, &knot).map(Into::into), has(&knot))?,
        tying_level: optional(knot_level_eval(gt, pred, &tying).map(Into::into), has(&tying))?,
        pushing_level: optional(knot_level_eval(gt, pred, &pushing).map(Into::into), has(&pushing))?,
        action: action_eval(gt, pred)?.into(),
        mean_precision_score: optional(mean_precision_score(gt, probs, &knot), has(&knot))?,
    })
}

/// Median, mean and population standard deviation over `n` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Some(Summary {
            n,
            median,
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripleSummary {
    pub precision: Summary,
    pub sensitivity: Summary,
    pub f1: Summary,
}

impl TripleSummary {
    fn of<'a>(tasks: impl Iterator<Item = &'a TaskEval> + Clone) -> Option<TripleSummary> {
        let col = |f: fn(&MetricTriple) -> f64| {
            Summary::of(&tasks.clone().map(|t| f(&t.metrics)).collect::<Vec<_>>())
        };
        Some(TripleSummary {
            precision: col(|m| m.precision)?,
            sensitivity: col(|m| m.sensitivity)?,
            f1: col(|m| m.f1)?,
        })
    }
}

/// Summaries over videos; videos without a value for a task are skipped and
/// `skipped` records how many.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateEval {
    pub n_videos: usize,
    pub knot_level: Option<TripleSummary>,
    pub tying_level: Option<TripleSummary>,
    pub pushing_level: Option<TripleSummary>,
    pub action: TripleSummary,
    pub mean_precision_score: Option<Summary>,
    pub skipped: SkipCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub knot_level: usize,
    pub tying_level: usize,
    pub pushing_level: usize,
    pub mean_precision_score: usize,
}

pub fn aggregate(videos: &[VideoEval]) -> Result<AggregateEval> {
    if videos.is_empty() {
        return Err(Error::validation("nothing to aggregate"));
    }
    let skipped = |f: fn(&VideoEval) -> bool| videos.iter().filter(|v| !f(v)).count();
    let mps: Vec<f64> = videos.iter().filter_map(|v| v.mean_precision_score).collect();
    Ok(AggregateEval {
        n_videos: videos.len(),
        knot_level: TripleSummary::of(videos.iter().filter_map(|v| v.knot_level.as_ref())),
        tying_level: TripleSummary::of(videos.iter().filter_map(|v| v.tying_level.as_ref())),
        pushing_level: TripleSummary::of(videos.iter().filter_map(|v| v.pushing_level.as_ref())),
        action: TripleSummary::of(videos.iter().map(|v| &v.action)).expect("non-empty"),
        mean_precision_score: Summary::of(&mps),
        skipped: SkipCounts {
            knot_level: skipped(|v| v.knot_level.is_some()),
            tying_level: skipped(|v| v.tying_level.is_some()),
            pushing_level: skipped(|v| v.pushing_level.is_some()),
            mean_precision_score: skipped(|v| v.mean_precision_score.is_some()),
        },
    })
}

/// Per-video evaluations and their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_video: Vec<VideoEval>,
    pub aggregate: AggregateEval,
}

impl EvalReport {
    pub fn new(per_video: Vec<VideoEval>) -> Result<EvalReport> {
        let aggregate = aggregate(&per_video)?;
        Ok(EvalReport { per_video, aggregate })
    }
}
