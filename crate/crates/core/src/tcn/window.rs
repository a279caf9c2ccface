use serde::{Deserialize, Serialize};

use super::WindowSample;
use crate::error::{Error, Result};
use crate::featstore::FeatureSequence;

/// Dimensions with a standard deviation below this are left unscaled.
const MIN_STD: f64 = 1e-6;

/// Per-dimension z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Mean and population standard deviation over every row of `seqs`.
    pub fn fit<'a>(seqs: impl IntoIterator<Item = &'a FeatureSequence>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sum_sq: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for seq in seqs {
            if sum.is_empty() {
                sum = vec![0.0; seq.dim()];
                sum_sq = vec![0.0; seq.dim()];
            } else if seq.dim() != sum.len() {
                return Err(Error::validation(format!(
                    "normalizer: mixed feature dims {} and {}",
                    sum.len(),
                    seq.dim()
                )));
            }
            for row in seq.rows() {
                for ((s, q), &x) in sum.iter_mut().zip(&mut sum_sq).zip(row) {
                    *s += x as f64;
                    *q += (x as f64) * (x as f64);
                }
            }
            n += seq.len();
        }
        if n == 0 {
            return Err(Error::validation("normalizer: no rows to fit"));
        }
        let n = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sum_sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let sd = (q / n - m * m).max(0.0).sqrt();
                if sd < MIN_STD {
                    1.0
                } else {
                    sd as f32
                }
            })
            .collect();
        Ok(Self {
            mean: mean.iter().map(|m| *m as f32).collect(),
            std,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, seq: &FeatureSequence) -> Result<FeatureSequence> {
        if seq.dim() != self.dim() {
            return Err(Error::validation(format!(
                "normalizer dim {} does not match feature dim {}",
                self.dim(),
                seq.dim()
            )));
        }
        Ok(seq.map_rows(|row| {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }))
    }
}

/// Fills `out` with the `len`-row window centered on `t`, repeating the first
/// or last row where the window runs past the sequence.
pub fn padded_window(seq: &FeatureSequence, t: usize, len: usize, out: &mut Vec<f32>) {
    let half = len / 2;
    let last = seq.len() - 1;
    out.clear();
    for o in 0..len {
        let idx = (t + o).saturating_sub(half).min(last);
        out.extend_from_slice(seq.row(idx));
    }
}

/// One window per position of an already normalized sequence.
pub fn build_windows(seq: &FeatureSequence, labels: &[usize], len: usize) -> Result<Vec<WindowSample>> {
    if labels.len() != seq.len() {
        return Err(Error::validation(format!(
            "{} labels for {} feature rows",
            labels.len(),
            seq.len()
        )));
    }
    Ok(labels
        .iter()
        .enumerate()
        .map(|(t, &target)| {
            let mut window = Vec::with_capacity(len * seq.dim());
            padded_window(seq, t, len, &mut window);
            WindowSample { window, target }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: &[[f32; 2]]) -> FeatureSequence {
        FeatureSequence::new(
            2,
            rows.iter().flatten().copied().collect(),
            (0..rows.len() as u64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn replicate_padding_at_edges() {
        let s = seq(&[[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]]);
        let mut w = Vec::new();
        padded_window(&s, 0, 5, &mut w);
        assert_eq!(w, vec![1.0, 10.0, 1.0, 10.0, 1.0, 10.0, 2.0, 20.0, 3.0, 30.0]);
        padded_window(&s, 2, 5, &mut w);
        assert_eq!(w, vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 3.0, 30.0, 3.0, 30.0]);
    }

    #[test]
    fn fit_and_apply_z_scores() {
        let s = seq(&[[1.0, 5.0], [3.0, 5.0]]);
        let norm = Normalizer::fit([&s]).unwrap();
        assert_eq!(norm.mean, vec![2.0, 5.0]);
        assert_eq!(norm.std, vec![1.0, 1.0]);
        let z = norm.apply(&s).unwrap();
        assert_eq!(z.vectors(), &[-1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn build_windows_checks_lengths() {
        let s = seq(&[[1.0, 1.0], [2.0, 2.0]]);
        assert!(build_windows(&s, &[0], 3).is_err());
        let w = build_windows(&s, &[4, 7], 3).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].target, 7);
        assert_eq!(w[1].window, vec![1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
    }
}
