//! Analytic gradients against central finite differences, all in `f64`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kernel::{self, Workspace};
use super::{sample_loss_grad, TemporalModel, WindowSample};
use crate::error::{Error, Result};

/// Default number of sampled parameter coordinates.
pub const GRAD_CHECK_COORDS: usize = 256;

/// Max relative discrepancy over `GRAD_CHECK_COORDS` coordinates sampled with
/// the model's init seed (every coordinate when the model is smaller).
pub fn grad_check(model: &TemporalModel, sample_: &WindowSample, epsilon: f64) -> Result<f64> {
    let total = model.params().len();
    let mut rng = ChaCha8Rng::seed_from_u64(model.init_seed());
    let coords = sample(&mut rng, total, GRAD_CHECK_COORDS.min(total)).into_vec();
    grad_check_coords(model, sample_, epsilon, &coords)
}

/// `max |g_a - g_n| / max(1e-12, |g_a| + |g_n|)` over `coords`, with
/// `g_n = (L(theta + eps) - L(theta - eps)) / (2 eps)`.
pub fn grad_check_coords(
    model: &TemporalModel,
    sample_: &WindowSample,
    epsilon: f64,
    coords: &[usize],
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::validation(format!("epsilon must be > 0, got {epsilon}")));
    }
    // shape checks
    model.loss_and_grads(std::slice::from_ref(sample_))?;
    if let Some(c) = coords.iter().find(|c| **c >= model.params().len()) {
        return Err(Error::validation(format!("coordinate {c} out of range")));
    }

    let layout = model.layout();
    let mut params: Vec<f64> = model.params().iter().map(|&p| p as f64).collect();
    let mut ws = Workspace::<f64>::new(&layout, model.arch().context_len());
    let mut analytic = vec![0.0f64; layout.total];
    sample_loss_grad(&layout, &params, sample_, 1.0, &mut ws, &mut analytic);

    let mut loss_at = |params: &[f64]| -> f64 {
        let logits = kernel::forward(&layout, params, &sample_.window, &mut ws);
        kernel::softmax_xent(&logits, sample_.target).1
    };

    let mut worst = 0.0f64;
    for &c in coords {
        let orig = params[c];
        params[c] = orig + epsilon;
        let plus = loss_at(&params);
        params[c] = orig - epsilon;
        let minus = loss_at(&params);
        params[c] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[c];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}
