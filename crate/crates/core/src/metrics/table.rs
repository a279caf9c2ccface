use std::fmt::Write;

use super::{AggregateEval, Summary, TripleSummary};

/// Knot-level median metrics of one single-seed model, listed under the
/// ensemble row.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberRow {
    pub seed: u64,
    pub knot_level: Option<TripleSummary>,
}

const RULE: &str = "+----------------------------------+--------------+--------------+--------------+";

fn row(out: &mut String, task: &str, cells: [String; 3]) {
    let _ = writeln!(
        out,
        "| {task:<32} | {:>12} | {:>12} | {:>12} |",
        cells[0], cells[1], cells[2]
    );
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{RULE}");
    row(
        out,
        "Task",
        ["Precision".into(), "Sensitivity".into(), "F1 score".into()],
    );
    let _ = writeln!(out, "{RULE}");
}

fn medians(t: &Option<TripleSummary>) -> [String; 3] {
    match t {
        Some(t) => [t.precision, t.sensitivity, t.f1].map(|s| format!("{:.2}", s.median)),
        None => ["n/a".into(), "n/a".into(), "n/a".into()],
    }
}

fn mean_std(s: Option<Summary>) -> String {
    match s {
        Some(s) => format!("{:.2} +- {:.2}", s.mean, s.std),
        None => "n/a".into(),
    }
}

/// Plain-text tables: knot-level medians, knot-level mean +- std, mean
/// precision score, action-recognition medians, then ensemble vs members.
pub fn render_tables(agg: &AggregateEval, members: &[MemberRow]) -> String {
    let mut out = String::new();

    header(&mut out, "Knot level, median over videos");
    row(&mut out, "Tying and pushing knot level", medians(&agg.knot_level));
    row(&mut out, "Tying knot level", medians(&agg.tying_level));
    row(&mut out, "Pushing knot level", medians(&agg.pushing_level));
    let _ = writeln!(out, "{RULE}\n");

    header(&mut out, "Knot level, mean +- std over videos");
    let cells = match &agg.knot_level {
        Some(t) => [t.precision, t.sensitivity, t.f1].map(|s| mean_std(Some(s))),
        None => ["n/a".into(), "n/a".into(), "n/a".into()],
    };
    row(&mut out, "Tying and pushing knot level", cells);
    let _ = writeln!(out, "{RULE}\n");

    let _ = writeln!(out, "Mean precision score, mean +- std over videos");
    let _ = writeln!(out, "{RULE}");
    row(
        &mut out,
        "Tying and pushing knot level",
        [mean_std(agg.mean_precision_score), String::new(), String::new()],
    );
    let _ = writeln!(out, "{RULE}\n");

    header(&mut out, "Action recognition, median over videos");
    row(&mut out, "Action recognition", medians(&Some(agg.action)));
    let _ = writeln!(out, "{RULE}");

    if !members.is_empty() {
        let _ = writeln!(out);
        header(&mut out, "Ensemble vs single models, knot level medians");
        row(&mut out, "Ensemble", medians(&agg.knot_level));
        for m in members {
            row(
                &mut out,
                &format!("Single (seed={})", m.seed),
                medians(&m.knot_level),
            );
        }
        let _ = writeln!(out, "{RULE}");
    }

    let s = &agg.skipped;
    let _ = writeln!(
        out,
        "\n{} videos; without knot positions: {} (tying {}, pushing {})",
        agg.n_videos, s.knot_level, s.tying_level, s.pushing_level
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Action, ClassLabel, Level};
    use crate::metrics::{aggregate, evaluate_video};

    #[test]
    fn renders_every_section() {
        let gt = vec![
            ClassLabel::new(Action::TyingKnot, Level::Good),
            ClassLabel::new(Action::Needling, Level::Good),
        ];
        let probs = vec![[1.0 / 12.0; 12]; 2];
        let v = evaluate_video("v", &gt, &gt, &probs).unwrap();
        let agg = aggregate(&[v]).unwrap();
        let text = render_tables(
            &agg,
            &[MemberRow {
                seed: 2022,
                knot_level: agg.knot_level,
            }],
        );
        assert!(text
            .contains("| Tying and pushing knot level     |         1.00 |         1.00 |         1.00 |"));
        assert!(text.contains("Pushing knot level"));
        assert!(text.contains("n/a"));
        assert!(text.contains("1.00 +- 0.00"));
        assert!(text.contains("Single (seed=2022)"));
        let lines: Vec<&str> = text.lines().filter(|l| l.starts_with('|')).collect();
        assert!(lines.iter().all(|l| l.len() == RULE.len()));
    }
}
