use crate::domain::{Action, ClassLabel, Level, N_CLASSES};
use crate::error::{Error, Result};

/// `sum_n (R_n - R_{n-1}) * P_n` over descending distinct score thresholds.
///
/// Items with equal scores enter together as a single threshold step.
pub fn average_precision(gt: &[bool], scores: &[f64]) -> Result<f64> {
    if gt.len() != scores.len() {
        return Err(Error::validation(format!(
            "{} labels but {} scores",
            gt.len(),
            scores.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::validation(format!("score {s} is not a number")));
    }
    let n_pos = gt.iter().filter(|g| **g).count();
    if n_pos == 0 {
        return Err(Error::validation("average precision needs at least one positive"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            tp += usize::from(gt[order[i]]);
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Support-weighted average precision of the level classes at positions whose
/// ground-truth action is in `actions`. The score for level `l` is the total
/// probability of the classes `(a, l)` for `a` in `actions`.
pub fn mean_precision_score(
    gt: &[ClassLabel],
    probs: &[[f64; N_CLASSES]],
    actions: &[Action],
) -> Result<f64> {
    if gt.len() != probs.len() {
        return Err(Error::validation(format!(
            "{} labels but {} probability rows",
            gt.len(),
            probs.len()
        )));
    }
    let positions: Vec<usize> = (0..gt.len())
        .filter(|&i| actions.contains(&gt[i].action))
        .collect();
    if positions.is_empty() {
        return Err(Error::validation("no knot-related ground truth"));
    }
    let mut weighted = 0.0;
    let mut total = 0usize;
    for level in Level::ALL {
        let is_pos: Vec<bool> = positions.iter().map(|&i| gt[i].level == level).collect();
        let support = is_pos.iter().filter(|p| **p).count();
        if support == 0 {
            continue;
        }
        let scores: Vec<f64> = positions
            .iter()
            .map(|&i| {
                actions
                    .iter()
                    .map(|&a| probs[i][ClassLabel::new(a, level).index()])
                    .sum()
            })
            .collect();
        weighted += support as f64 * average_precision(&is_pos, &scores)?;
        total += support;
    }
    Ok(weighted / total as f64)
}
