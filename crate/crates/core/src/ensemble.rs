//! Seed ensembles: identical architecture and data, different initialization
//! and shuffling seeds. Hard labels come from a plurality vote; scores are the
//! mean of the member probabilities.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::N_CLASSES;
use crate::error::{Error, Result};
use crate::featstore::FeatureSequence;
use crate::tcn::{
    init_model, load_checkpoint, save_checkpoint, train, ArchConfig, Normalizer, SequencePrediction,
    TemporalModel, TrainConfig, WindowSample,
};

/// Seeds of the ten-member reference ensemble.
pub const DEFAULT_SEEDS: [u64; 10] = [2022, 30548, 85844, 20, 180, 357, 485621, 102314, 305945, 0];

pub const ENSEMBLE_INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<TemporalModel>,
    normalizer: Normalizer,
}

/// Voted label and mean member probabilities at every position.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub labels: Vec<usize>,
    pub probs: Vec<[f64; N_CLASSES]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnsembleIndex {
    seeds: Vec<u64>,
    arch: ArchConfig,
    arch_hash: String,
    members: Vec<String>,
}

/// Hex SHA-256 of the architecture's JSON form.
pub fn arch_hash(arch: &ArchConfig) -> String {
    let json = serde_json::to_vec(arch).expect("arch serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::validation("an ensemble needs at least one seed"));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(Error::validation(format!("duplicate ensemble seed {dup}")));
    }
    Ok(())
}

impl Ensemble {
    pub fn new(members: Vec<TemporalModel>, normalizer: Normalizer) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::validation("an ensemble needs at least one member"))?;
        if members.iter().any(|m| m.arch() != first.arch()) {
            return Err(Error::validation("ensemble members differ in architecture"));
        }
        if normalizer.dim() != first.arch().input_dim {
            return Err(Error::validation(format!(
                "normalizer dim {} != input_dim {}",
                normalizer.dim(),
                first.arch().input_dim
            )));
        }
        check_seeds(&members.iter().map(TemporalModel::init_seed).collect::<Vec<_>>())?;
        Ok(Self { members, normalizer })
    }

    pub fn members(&self) -> &[TemporalModel] {
        &self.members
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.members.iter().map(TemporalModel::init_seed).collect()
    }

    pub fn arch(&self) -> &ArchConfig {
        self.members[0].arch()
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn member_predictions(&self, seq: &FeatureSequence) -> Result<Vec<SequencePrediction>> {
        self.members
            .iter()
            .map(|m| m.predict_sequence(seq, &self.normalizer))
            .collect()
    }

    pub fn predict_timeline(&self, seq: &FeatureSequence) -> Result<Timeline> {
        combine(&self.member_predictions(seq)?)
    }

    /// Writes `member_<i>.ktcm` per member plus `index.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut names = Vec::with_capacity(self.members.len());
        for (i, m) in self.members.iter().enumerate() {
            let name = format!("member_{i}.ktcm");
            save_checkpoint(m, &self.normalizer, dir.join(&name))?;
            names.push(name);
        }
        let index = EnsembleIndex {
            seeds: self.seeds(),
            arch: self.arch().clone(),
            arch_hash: arch_hash(self.arch()),
            members: names,
        };
        let path = dir.join(ENSEMBLE_INDEX_FILE);
        let json = serde_json::to_string_pretty(&index).expect("index serializes") + "\n";
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(ENSEMBLE_INDEX_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index: EnsembleIndex = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        if index.arch_hash != arch_hash(&index.arch) {
            return Err(Error::validation(format!(
                "{}: arch hash mismatch",
                path.display()
            )));
        }
        if index.members.len() != index.seeds.len() {
            return Err(Error::validation(format!(
                "{}: {} members but {} seeds",
                path.display(),
                index.members.len(),
                index.seeds.len()
            )));
        }
        let mut members = Vec::with_capacity(index.members.len());
        let mut normalizer: Option<Normalizer> = None;
        for (name, seed) in index.members.iter().zip(&index.seeds) {
            let member_path = dir.join(name);
            let (model, norm) = load_checkpoint(&member_path)?;
            if model.arch() != &index.arch || model.init_seed() != *seed {
                return Err(Error::validation(format!(
                    "{} does not match the ensemble index",
                    member_path.display()
                )));
            }
            match &normalizer {
                Some(n) if n != &norm => {
                    return Err(Error::validation(format!(
                        "{} carries a different normalizer",
                        member_path.display()
                    )))
                }
                _ => normalizer = Some(norm),
            }
            members.push(model);
        }
        let normalizer = normalizer.ok_or_else(|| Error::validation("empty ensemble index"))?;
        Self::new(members, normalizer)
    }
}

/// Member `i` is `train(init_model(arch, seeds[i]), dataset, cfg)` with the
/// config's shuffling seed replaced by `seeds[i]`. Members train in parallel;
/// the result does not depend on scheduling. Also returns each member's loss
/// history.
pub fn train_ensemble(
    dataset: &[WindowSample],
    arch: &ArchConfig,
    cfg: &TrainConfig,
    seeds: &[u64],
    normalizer: Normalizer,
) -> Result<(Ensemble, Vec<Vec<f64>>)> {
    check_seeds(seeds)?;
    let trained = seeds
        .par_iter()
        .map(|&seed| {
            let member_cfg = TrainConfig { seed, ..cfg.clone() };
            train(init_model(arch, seed)?, dataset, &member_cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let (members, histories) = trained.into_iter().map(|o| (o.model, o.loss_history)).unzip();
    Ok((Ensemble::new(members, normalizer)?, histories))
}

/// Plurality label; ties go to the highest mean probability among the tied
/// classes, then to the lowest class index.
pub fn vote(labels: &[usize], probs: &[[f64; N_CLASSES]]) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::validation("vote needs at least one member"));
    }
    if labels.len() != probs.len() {
        return Err(Error::validation(format!(
            "{} labels but {} probability rows",
            labels.len(),
            probs.len()
        )));
    }
    let mut counts = [0usize; N_CLASSES];
    for &l in labels {
        if l >= N_CLASSES {
            return Err(Error::validation(format!("class index {l} out of range")));
        }
        counts[l] += 1;
    }
    let top = *counts.iter().max().expect("non-empty");
    // summing sorted values makes the comparison independent of member order
    let prob_sum = |c: usize| {
        let mut col: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        col.sort_by(f64::total_cmp);
        col.iter().sum::<f64>()
    };
    let mut best: Option<(usize, f64)> = None;
    for c in (0..N_CLASSES).filter(|&c| counts[c] == top) {
        let s = prob_sum(c);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    Ok(best.expect("some class has the top count").0)
}

/// Votes position by position over member predictions of one sequence.
pub fn combine(members: &[SequencePrediction]) -> Result<Timeline> {
    let first = members
        .first()
        .ok_or_else(|| Error::validation("no member predictions"))?;
    let len = first.labels.len();
    if members
        .iter()
        .any(|m| m.labels.len() != len || m.probs.len() != len)
    {
        return Err(Error::validation("member predictions differ in length"));
    }
    let mut labels = Vec::with_capacity(len);
    let mut probs = Vec::with_capacity(len);
    let mut member_labels = vec![0usize; members.len()];
    let mut member_probs = vec![[0.0; N_CLASSES]; members.len()];
    for t in 0..len {
        let mut mean = [0.0f64; N_CLASSES];
        for (k, m) in members.iter().enumerate() {
            member_labels[k] = m.labels[t];
            member_probs[k] = m.probs[t];
            // running mean: exact when every member agrees
            for (acc, p) in mean.iter_mut().zip(&m.probs[t]) {
                *acc += (p - *acc) / (k + 1) as f64;
            }
        }
        labels.push(vote(&member_labels, &member_probs)?);
        probs.push(mean);
    }
    Ok(Timeline { labels, probs })
}
