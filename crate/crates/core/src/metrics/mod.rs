//! One-vs-all precision / sensitivity / F1, support-weighted multiclass
//! averages, knot-level and action evaluations, average precision, and
//! per-video aggregation.
//!
//! Empty denominators follow the `0 / 0 = 0` convention throughout.
//! "Sensitivity" and "recall" name the same quantity.

mod aggregate;
mod ap;
mod table;

use serde::{Deserialize, Serialize};

use crate::domain::{Action, ClassLabel, Level};
use crate::error::{Error, Result};

pub use aggregate::{
    aggregate, evaluate_video, AggregateEval, EvalReport, SkipCounts, Summary, TaskEval, TripleSummary,
    VideoEval,
};
pub use ap::{average_precision, mean_precision_score};
pub use table::{render_tables, MemberRow};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub precision: f64,
    pub sensitivity: f64,
    pub f1: f64,
}

impl MetricTriple {
    pub const PERFECT: MetricTriple = MetricTriple {
        precision: 1.0,
        sensitivity: 1.0,
        f1: 1.0,
    };
}

fn check_lengths<A, B>(gt: &[A], pred: &[B]) -> Result<()> {
    if gt.len() != pred.len() {
        return Err(Error::validation(format!(
            "ground truth has {} positions, prediction {}",
            gt.len(),
            pred.len()
        )));
    }
    Ok(())
}

/// Confusion counts of `positive` against every other class.
pub fn ova_counts<L: PartialEq>(gt: &[L], pred: &[L], positive: &L) -> Result<MetricCounts> {
    check_lengths(gt, pred)?;
    let mut c = MetricCounts::default();
    for (g, p) in gt.iter().zip(pred) {
        match (g == positive, p == positive) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn prf(c: MetricCounts) -> MetricTriple {
    let tp = c.tp as f64;
    let precision = ratio(tp, tp + c.fp as f64);
    let sensitivity = ratio(tp, tp + c.fn_ as f64);
    let f1 = ratio(2.0 * precision * sensitivity, precision + sensitivity);
    MetricTriple {
        precision,
        sensitivity,
        f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<L> {
    pub class: L,
    pub support: usize,
    pub counts: MetricCounts,
    pub metrics: MetricTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics<L> {
    pub weighted: MetricTriple,
    pub per_class: Vec<ClassMetrics<L>>,
}

impl<L> WeightedMetrics<L> {
    pub fn supports(&self) -> Vec<usize> {
        self.per_class.iter().map(|c| c.support).collect()
    }
}

/// Per-class one-vs-all metrics averaged with weights `support_c / sum(support)`.
pub fn weighted_metrics<L: PartialEq + Clone>(
    gt: &[L],
    pred: &[L],
    class_set: &[L],
) -> Result<WeightedMetrics<L>> {
    check_lengths(gt, pred)?;
    if class_set.is_empty() {
        return Err(Error::validation("empty class set"));
    }
    let per_class = class_set
        .iter()
        .map(|class| {
            let counts = ova_counts(gt, pred, class)?;
            Ok(ClassMetrics {
                class: class.clone(),
                support: counts.tp + counts.fn_,
                counts,
                metrics: prf(counts),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total: usize = per_class.iter().map(|c| c.support).sum();
    if total == 0 {
        return Err(Error::validation("no evaluated positions"));
    }
    // divide once so perfect per-class scores sum to exactly 1
    let mut weighted = MetricTriple::default();
    for c in &per_class {
        let n = c.support as f64;
        weighted.precision += n * c.metrics.precision;
        weighted.sensitivity += n * c.metrics.sensitivity;
        weighted.f1 += n * c.metrics.f1;
    }
    weighted.precision /= total as f64;
    weighted.sensitivity /= total as f64;
    weighted.f1 /= total as f64;
    Ok(WeightedMetrics { weighted, per_class })
}

/// Level metrics at positions whose ground-truth action is in `actions`.
///
/// The predicted level is the level component of the predicted class, even
/// when the predicted action differs.
pub fn knot_level_eval(
    gt: &[ClassLabel],
    pred: &[ClassLabel],
    actions: &[Action],
) -> Result<WeightedMetrics<Level>> {
    check_lengths(gt, pred)?;
    let (gt_levels, pred_levels): (Vec<Level>, Vec<Level>) = gt
        .iter()
        .zip(pred)
        .filter(|(g, _)| actions.contains(&g.action))
        .map(|(g, p)| (g.level, p.level))
        .unzip();
    if gt_levels.is_empty() {
        return Err(Error::validation("no knot-related ground truth"));
    }
    weighted_metrics(&gt_levels, &pred_levels, &Level::ALL)
}

/// Action-recognition metrics over the four actions at every position.
pub fn action_eval(gt: &[ClassLabel], pred: &[ClassLabel]) -> Result<WeightedMetrics<Action>> {
    check_lengths(gt, pred)?;
    if gt.is_empty() {
        return Err(Error::validation("no evaluated positions"));
    }
    let gt_actions: Vec<Action> = gt.iter().map(|l| l.action).collect();
    let pred_actions: Vec<Action> = pred.iter().map(|l| l.action).collect();
    weighted_metrics(&gt_actions, &pred_actions, &Action::ALL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GT: [usize; 11] = [2, 0, 0, 0, 2, 0, 0, 0, 1, 1, 2];
    const PR: [usize; 11] = [2, 0, 0, 1, 1, 1, 0, 0, 0, 2, 2];

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn worked_example_counts() {
        let c = ova_counts(&GT, &PR, &0).unwrap();
        assert_eq!(c, MetricCounts { tp: 4, fp: 1, fn_: 2 });
        let t = prf(c);
        assert!(close(t.precision, 0.8, 1e-12));
        assert!(close(t.sensitivity, 2.0 / 3.0, 1e-12));
        assert!(close(t.f1, 0.727273, 1e-6));
    }

    #[test]
    fn worked_example_weights() {
        let w = weighted_metrics(&GT, &PR, &[0, 1, 2]).unwrap();
        assert_eq!(w.supports(), vec![6, 2, 3]);
        let expected_f1: f64 = w
            .per_class
            .iter()
            .zip([6.0 / 11.0, 2.0 / 11.0, 3.0 / 11.0])
            .map(|(c, wt)| wt * c.metrics.f1)
            .sum();
        assert!(close(w.weighted.f1, expected_f1, 1e-15));
    }

    #[test]
    fn perfect_and_absent_classes() {
        let c = ova_counts(&GT, &GT, &2).unwrap();
        assert_eq!(c, MetricCounts { tp: 3, fp: 0, fn_: 0 });
        assert_eq!(ova_counts(&GT, &PR, &7).unwrap(), MetricCounts::default());
        assert_eq!(prf(MetricCounts::default()), MetricTriple::default());
        assert_eq!(prf(MetricCounts { tp: 5, fp: 0, fn_: 0 }), MetricTriple::PERFECT);
        assert_eq!(
            weighted_metrics(&GT, &GT, &[0, 1, 2]).unwrap().weighted,
            MetricTriple::PERFECT
        );
        assert!(ova_counts(&GT, &PR[..3], &0).is_err());
    }

    #[test]
    fn two_class_hand_arithmetic() {
        // supports 3 and 1, per-class F1 1.0 and 0.0
        let gt = [0, 0, 0, 1];
        let pred = [0, 0, 0, 2];
        let w = weighted_metrics(&gt, &pred, &[0, 1]).unwrap();
        assert!(close(w.weighted.f1, 0.75, 1e-15));
        assert!(weighted_metrics(&gt, &pred, &[5]).is_err());
        assert!(weighted_metrics::<usize>(&gt, &pred, &[]).is_err());
    }

    #[test]
    fn knot_level_ignores_non_knot_positions() {
        let l = |a, v| ClassLabel::new(a, v);
        let gt = vec![
            l(Action::Waiting, Level::Good),
            l(Action::TyingKnot, Level::Bad),
            l(Action::PushingKnot, Level::Good),
            l(Action::Needling, Level::Okay),
        ];
        let pred = vec![
            l(Action::Needling, Level::Bad),
            l(Action::Waiting, Level::Bad),
            l(Action::PushingKnot, Level::Good),
            l(Action::Waiting, Level::Good),
        ];
        let w = knot_level_eval(&gt, &pred, &Action::KNOT_RELATED).unwrap();
        assert_eq!(w.weighted, MetricTriple::PERFECT);
        assert_eq!(w.supports(), vec![1, 0, 1]);
        let tying = knot_level_eval(&gt, &pred, &[Action::TyingKnot]).unwrap();
        assert_eq!(tying.supports(), vec![0, 0, 1]);
        let err = knot_level_eval(&gt[..1], &pred[..1], &Action::KNOT_RELATED).unwrap_err();
        assert!(err.to_string().contains("no knot-related ground truth"));
    }

    #[test]
    fn action_hand_arithmetic() {
        let l = |a| ClassLabel::new(a, Level::Good);
        let gt = vec![
            l(Action::Waiting),
            l(Action::Waiting),
            l(Action::Needling),
            l(Action::Needling),
        ];
        let pred = vec![l(Action::Waiting); 4];
        let w = action_eval(&gt, &pred).unwrap().weighted;
        assert!(close(w.precision, 0.25, 1e-15));
        assert!(close(w.sensitivity, 0.5, 1e-15));
        assert!(close(w.f1, 1.0 / 3.0, 1e-15));
        assert_eq!(action_eval(&gt, &gt).unwrap().weighted, MetricTriple::PERFECT);
    }

    proptest! {
        #[test]
        fn perfect_predictions_score_exactly_one(gt in prop::collection::vec(0usize..12, 1..400)) {
            let w = weighted_metrics(&gt, &gt, &(0..12).collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(w.weighted, MetricTriple::PERFECT);
        }

        #[test]
        fn count_identities(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40)) {
            let (gt, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let mut tp_total = 0;
            for c in 0..4 {
                let k = ova_counts(&gt, &pred, &c).unwrap();
                prop_assert_eq!(k.tp + k.fn_, gt.iter().filter(|g| **g == c).count());
                tp_total += k.tp;
                let t = prf(k);
                for v in [t.precision, t.sensitivity, t.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
            prop_assert_eq!(tp_total, gt.iter().zip(&pred).filter(|(g, p)| g == p).count());
            let w = weighted_metrics(&gt, &pred, &[0, 1, 2, 3]).unwrap();
            prop_assert_eq!(w.weighted.f1 >= 1.0 - 1e-12, gt == pred);
        }

        #[test]
        fn prf_monotone_in_tp(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
            let a = prf(MetricCounts { tp, fp, fn_ });
            let b = prf(MetricCounts { tp: tp + 1, fp, fn_ });
            prop_assert!(b.precision >= a.precision);
            prop_assert!(b.sensitivity >= a.sensitivity);
            prop_assert!(b.f1 >= a.f1);
            if a.precision + a.sensitivity > 0.0 {
                let f1 = 2.0 * a.precision * a.sensitivity / (a.precision + a.sensitivity);
                prop_assert!((a.f1 - f1).abs() <= 1e-12);
            }
        }
    }
}
