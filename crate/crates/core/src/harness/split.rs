use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Video-level assignment to `k` folds; `folds[f]` is the sorted test section
/// of fold `f`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<String>>,
}

impl FoldAssignment {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|v| v == id))
    }

    /// Every id outside fold `f`, sorted.
    pub fn train_ids(&self, f: usize) -> Vec<String> {
        let mut ids: Vec<String> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, ids)| ids.iter().cloned())
            .collect();
        ids.sort();
        ids
    }
}

/// Sorts the ids, shuffles them with `seed` and deals them round-robin.
pub fn kfold_split(video_ids: &[String], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::validation(format!("k must be >= 2, got {k}")));
    }
    if video_ids.len() < k {
        return Err(Error::validation(format!(
            "{} videos cannot fill {k} folds",
            video_ids.len()
        )));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = video_ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Error::validation(format!("duplicate video id {dup:?}")));
    }
    let mut ids = video_ids.to_vec();
    ids.sort();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    folds.iter_mut().for_each(|f| f.sort());
    Ok(FoldAssignment { k, seed, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i:02}")).collect()
    }

    #[test]
    fn thirty_five_into_five_sevens() {
        let a = kfold_split(&ids(35), 5, 0).unwrap();
        assert!(a.folds.iter().all(|f| f.len() == 7));
    }

    #[test]
    fn seven_into_five() {
        let a = kfold_split(&ids(7), 5, 3).unwrap();
        let sizes: Vec<usize> = a.folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 2, 1, 1, 1]);
    }

    #[test]
    fn deterministic_and_order_free() {
        let a = kfold_split(&ids(20), 4, 9).unwrap();
        assert_eq!(a, kfold_split(&ids(20), 4, 9).unwrap());
        let mut rev = ids(20);
        rev.reverse();
        assert_eq!(a, kfold_split(&rev, 4, 9).unwrap());
        assert_ne!(a, kfold_split(&ids(20), 4, 10).unwrap());
    }

    #[test]
    fn leave_one_out() {
        let a = kfold_split(&ids(6), 6, 1).unwrap();
        assert!(a.folds.iter().all(|f| f.len() == 1));
        assert_eq!(a.train_ids(0).len(), 5);
    }

    #[test]
    fn errors() {
        assert!(kfold_split(&ids(4), 5, 0).is_err());
        assert!(kfold_split(&ids(4), 1, 0).is_err());
        let dup = vec!["a".to_string(), "a".to_string(), "b".to_string()];
        assert!(kfold_split(&dup, 2, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_and_balance(n in 2usize..60, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let a = kfold_split(&ids(n), k, seed).unwrap();
            let sizes: Vec<usize> = a.folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut all: Vec<String> = a.folds.concat();
            all.sort();
            prop_assert_eq!(all, ids(n));
            for f in 0..k {
                let train = a.train_ids(f);
                prop_assert_eq!(train.len() + a.folds[f].len(), n);
                prop_assert!(train.iter().all(|id| a.fold_of(id) != Some(f)));
            }
        }
    }
}
