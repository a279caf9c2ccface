use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::Workspace;
use super::{sample_loss_grad, TemporalModel, WindowSample};
use crate::domain::N_CLASSES;
use crate::error::{Error, Result};

/// Mini-batch Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Shuffling seed; ensemble training overrides it with the member seed.
    pub seed: u64,
    /// Weight each sample's loss by the inverse frequency of its class.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 30,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 1e-4,
            seed: 0,
            class_weighting: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::validation(format!("train config: {m}")));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and >= 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("adam_eps must be > 0 and weight_decay >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: TemporalModel,
    /// Sample-weighted mean training loss of each epoch.
    pub loss_history: Vec<f64>,
}

fn class_weights(dataset: &[WindowSample], enabled: bool) -> [f64; N_CLASSES] {
    if !enabled {
        return [1.0; N_CLASSES];
    }
    let mut counts = [0usize; N_CLASSES];
    for s in dataset {
        counts[s.target] += 1;
    }
    let present = counts.iter().filter(|c| **c > 0).count() as f64;
    let n = dataset.len() as f64;
    counts.map(|c| if c == 0 { 0.0 } else { n / (present * c as f64) })
}

/// Trains `model` on `dataset` (already normalized) and returns the result.
///
/// Per-sample forward/backward runs in single precision; gradients are summed
/// and the optimizer state is kept in double precision.
pub fn train(model: TemporalModel, dataset: &[WindowSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::validation("empty training set"));
    }
    let want = model.arch().context_len() * model.arch().input_dim;
    if let Some(bad) = dataset
        .iter()
        .find(|s| s.window.len() != want || s.target >= N_CLASSES)
    {
        return Err(Error::validation(format!(
            "training sample with {} values / target {} does not fit the model",
            bad.window.len(),
            bad.target
        )));
    }

    let mut model = model;
    let layout = model.layout();
    let n_params = layout.total;
    let weights = class_weights(dataset, cfg.class_weighting);

    let mut ws = Workspace::<f32>::new(&layout, model.arch().context_len());
    let mut sample_grad = vec![0.0f32; n_params];
    let mut grad = vec![0.0f64; n_params];
    let mut m = vec![0.0f64; n_params];
    let mut v = vec![0.0f64; n_params];
    let mut step = 0i32;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            let mut weight_sum = 0.0;
            for &i in batch {
                let sample = &dataset[i];
                let w = weights[sample.target];
                sample_grad.iter_mut().for_each(|g| *g = 0.0);
                batch_loss += sample_loss_grad(&layout, model.params(), sample, w, &mut ws, &mut sample_grad);
                weight_sum += w;
                for (g, &s) in grad.iter_mut().zip(&sample_grad) {
                    *g += s as f64;
                }
            }
            batch_loss /= weight_sum;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss * batch.len() as f64;

            step += 1;
            let bc1 = 1.0 - cfg.beta1.powi(step);
            let bc2 = 1.0 - cfg.beta2.powi(step);
            for (((p, g), mi), vi) in model.params_mut().iter_mut().zip(&grad).zip(&mut m).zip(&mut v) {
                let g = g / weight_sum;
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
                let update = (*mi / bc1) / ((*vi / bc2).sqrt() + cfg.adam_eps);
                let pv = *p as f64;
                *p = (pv - cfg.learning_rate * (update + cfg.weight_decay * pv)) as f32;
            }
        }
        let epoch_loss = epoch_loss / dataset.len() as f64;
        if !epoch_loss.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                loss: epoch_loss,
            });
        }
        log::debug!("seed {} epoch {}: loss {:.6}", cfg.seed, epoch + 1, epoch_loss);
        history.push(epoch_loss);
    }
    Ok(TrainOutcome {
        model,
        loss_history: history,
    })
}
