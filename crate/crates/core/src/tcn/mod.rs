//! Temporal convolutional network: stacked dilated, centered 1-D convolutions
//! that map a context window of chunk feature vectors to twelve class logits
//! for the middle position.
//!
//! Parameters are stored in single precision. Loss and gradient accumulation
//! run in double precision, and [`grad_check`] works entirely in double
//! precision against central finite differences.

mod checkpoint;
mod gradcheck;
pub(crate) mod kernel;
mod train;
mod window;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::N_CLASSES;
use crate::error::{Error, Result};
use crate::featstore::FeatureSequence;
pub use kernel::Tensor;
use kernel::{Layout, Workspace};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
};
pub use gradcheck::{grad_check, grad_check_coords, GRAD_CHECK_COORDS};
pub use train::{train, TrainConfig, TrainOutcome};
pub use window::{build_windows, padded_window, Normalizer};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArch {
    #[serde(default = "default_input_dim")]
    input_dim: usize,
    #[serde(default = "default_hidden")]
    hidden_width: usize,
    #[serde(default = "default_layers")]
    n_layers: usize,
    #[serde(default = "default_kernel")]
    kernel_size: usize,
    #[serde(default)]
    dilations: Option<Vec<usize>>,
    #[serde(default)]
    n_classes: Option<usize>,
}

fn default_input_dim() -> usize {
    32
}
fn default_hidden() -> usize {
    64
}
fn default_layers() -> usize {
    4
}
fn default_kernel() -> usize {
    3
}

/// Shape of the convolution stack. `dilations` default to `1, 2, 4, ...`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawArch")]
pub struct ArchConfig {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub n_layers: usize,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub n_classes: usize,
}

impl TryFrom<RawArch> for ArchConfig {
    type Error = Error;

    fn try_from(raw: RawArch) -> Result<Self> {
        let arch = ArchConfig {
            input_dim: raw.input_dim,
            hidden_width: raw.hidden_width,
            n_layers: raw.n_layers,
            kernel_size: raw.kernel_size,
            dilations: raw
                .dilations
                .unwrap_or_else(|| (0..raw.n_layers).map(|j| 1usize << j).collect()),
            n_classes: raw.n_classes.unwrap_or(N_CLASSES),
        };
        arch.validate()?;
        Ok(arch)
    }
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::new(32, 64, 4, 3).expect("default arch is valid")
    }
}

impl ArchConfig {
    pub fn new(input_dim: usize, hidden_width: usize, n_layers: usize, kernel_size: usize) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden_width,
            n_layers,
            kernel_size,
            dilations: (0..n_layers).map(|j| 1usize << j).collect(),
            n_classes: N_CLASSES,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::validation(format!("arch: {m}")));
        if self.input_dim == 0 || self.hidden_width == 0 {
            return bad("input_dim and hidden_width must be positive".into());
        }
        if self.n_layers == 0 {
            return bad("n_layers must be >= 1".into());
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return bad(format!("kernel_size {} must be odd", self.kernel_size));
        }
        if self.dilations.len() != self.n_layers {
            return bad(format!(
                "{} dilations given for {} layers",
                self.dilations.len(),
                self.n_layers
            ));
        }
        if self.dilations.iter().any(|d| *d == 0) {
            return bad("dilations must be positive".into());
        }
        if self.n_classes != N_CLASSES {
            return bad(format!("n_classes must be {N_CLASSES}"));
        }
        Ok(())
    }

    /// `1 + (k - 1) * sum(dilations)`.
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel_size - 1) * self.dilations.iter().sum::<usize>()
    }

    /// Window length fed to the network; always odd and equal to the receptive field.
    pub fn context_len(&self) -> usize {
        self.receptive_field()
    }

    pub fn n_params(&self) -> usize {
        Layout::new(self).total
    }
}

/// One training example: a `context_len x input_dim` window and its middle label.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub window: Vec<f32>,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalModel {
    arch: ArchConfig,
    params: Vec<f32>,
    init_seed: u64,
}

/// Logits and softmax probabilities for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub logits: [f64; N_CLASSES],
    pub probs: [f64; N_CLASSES],
}

/// Per-position probabilities and argmax labels over a whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencePrediction {
    pub probs: Vec<[f64; N_CLASSES]>,
    pub labels: Vec<usize>,
}

/// Flat gradient vector with the model's parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layout: Layout,
    values: Vec<f64>,
}

impl Gradients {
    pub fn tensor(&self, t: Tensor) -> &[f64] {
        &self.values[self.layout.range(t)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn init_model(arch: &ArchConfig, seed: u64) -> Result<TemporalModel> {
    arch.validate()?;
    let layout = Layout::new(arch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0f32; layout.total];
    let mut fill = |range: std::ops::Range<usize>, fan_in: usize, rng: &mut ChaCha8Rng| {
        let bound = (fan_in as f32).sqrt().recip();
        for p in &mut params[range] {
            *p = rng.random_range(-bound..bound);
        }
    };
    for l in &layout.layers {
        let fan_in = l.in_ch * layout.kernel;
        fill(
            l.weight..l.weight + l.weight_len(layout.hidden, layout.kernel),
            fan_in,
            &mut rng,
        );
        fill(l.bias..l.bias + layout.hidden, fan_in, &mut rng);
    }
    fill(layout.out_weight..layout.out_bias, layout.hidden, &mut rng);
    fill(layout.out_bias..layout.total, layout.hidden, &mut rng);
    Ok(TemporalModel {
        arch: arch.clone(),
        params,
        init_seed: seed,
    })
}

impl TemporalModel {
    /// Builds a model from explicit parameters laid out as described by [`ArchConfig`].
    pub fn from_params(arch: ArchConfig, params: Vec<f32>, init_seed: u64) -> Result<Self> {
        arch.validate()?;
        let want = arch.n_params();
        if params.len() != want {
            return Err(Error::validation(format!(
                "{} parameters given, arch needs {want}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("non-finite parameter"));
        }
        Ok(Self {
            arch,
            params,
            init_seed,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn tensor(&self, t: Tensor) -> &[f32] {
        &self.params[self.layout().range(t)]
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.arch)
    }

    fn check_window(&self, window: &[f32]) -> Result<()> {
        let want = self.arch.context_len() * self.arch.input_dim;
        if window.len() != want {
            return Err(Error::validation(format!(
                "window has {} values, expected {} x {}",
                window.len(),
                self.arch.context_len(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    pub fn forward(&self, window: &[f32]) -> Result<Output> {
        self.check_window(window)?;
        Ok(Evaluator::new(self).eval(window))
    }

    /// Mean cross-entropy over `batch` and its gradient, both in double precision.
    pub fn loss_and_grads(&self, batch: &[WindowSample]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::validation("empty batch"));
        }
        for s in batch {
            self.check_window(&s.window)?;
            if s.target >= N_CLASSES {
                return Err(Error::validation(format!("target {} out of range", s.target)));
            }
        }
        let layout = self.layout();
        let params: Vec<f64> = self.params.iter().map(|&p| p as f64).collect();
        let mut ws = Workspace::<f64>::new(&layout, self.arch.context_len());
        let mut grad = vec![0.0f64; layout.total];
        let mut loss = 0.0;
        for s in batch {
            loss += sample_loss_grad(&layout, &params, s, 1.0, &mut ws, &mut grad);
        }
        let n = batch.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, Gradients { layout, values: grad }))
    }

    /// Prediction at every position of `seq`, each from the window centered on
    /// that position with replicate padding at the edges.
    pub fn predict_sequence(
        &self,
        seq: &FeatureSequence,
        normalizer: &Normalizer,
    ) -> Result<SequencePrediction> {
        if seq.dim() != self.arch.input_dim {
            return Err(Error::validation(format!(
                "feature dim {} does not match model input_dim {}",
                seq.dim(),
                self.arch.input_dim
            )));
        }
        let normalized = normalizer.apply(seq)?;
        let len = self.arch.context_len();
        let mut eval = Evaluator::new(self);
        let mut window = Vec::with_capacity(len * seq.dim());
        let mut probs = Vec::with_capacity(seq.len());
        let mut labels = Vec::with_capacity(seq.len());
        for t in 0..seq.len() {
            padded_window(&normalized, t, len, &mut window);
            let out = eval.eval(&window);
            labels.push(argmax(&out.probs));
            probs.push(out.probs);
        }
        Ok(SequencePrediction { probs, labels })
    }
}

/// Double-precision evaluation with parameters converted once.
struct Evaluator {
    layout: Layout,
    params: Vec<f64>,
    ws: Workspace<f64>,
}

impl Evaluator {
    fn new(model: &TemporalModel) -> Self {
        let layout = model.layout();
        let ws = Workspace::new(&layout, model.arch.context_len());
        Self {
            params: model.params.iter().map(|&p| p as f64).collect(),
            layout,
            ws,
        }
    }

    fn eval(&mut self, window: &[f32]) -> Output {
        let logits = kernel::forward(&self.layout, &self.params, window, &mut self.ws);
        let (probs, _) = kernel::softmax_xent(&logits, 0);
        Output { logits, probs }
    }
}

/// Forward + backward for one sample; adds `weight * d loss / d params` to `grad`
/// and returns `weight * loss`.
pub(crate) fn sample_loss_grad<T: kernel::Scalar>(
    layout: &Layout,
    params: &[T],
    sample: &WindowSample,
    weight: f64,
    ws: &mut Workspace<T>,
    grad: &mut [T],
) -> f64 {
    let logits = kernel::forward(layout, params, &sample.window, ws);
    let (probs, loss) = kernel::softmax_xent(&logits, sample.target);
    let mut grad_logits = [T::zero(); N_CLASSES];
    for (c, g) in grad_logits.iter_mut().enumerate() {
        let onehot = if c == sample.target { 1.0 } else { 0.0 };
        *g = T::from_f64(weight * (probs[c] - onehot));
    }
    kernel::backward(layout, params, &grad_logits, ws, grad);
    weight * loss
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_window(arch: &ArchConfig, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..arch.context_len() * arch.input_dim)
            .map(|_| rng.random_range(-2.0f32..2.0))
            .collect()
    }

    #[test]
    fn default_receptive_field_is_31() {
        let arch = ArchConfig::default();
        assert_eq!(arch.dilations, vec![1, 2, 4, 8]);
        assert_eq!(arch.context_len(), 31);
    }

    #[test]
    fn arch_json_defaults_and_validation() {
        let arch: ArchConfig =
            serde_json::from_str(r#"{"hidden_width": 8, "n_layers": 2, "input_dim": 8}"#).unwrap();
        assert_eq!(arch.dilations, vec![1, 2]);
        assert_eq!(arch.context_len(), 7);
        assert!(serde_json::from_str::<ArchConfig>(r#"{"kernel_size": 4}"#).is_err());
        assert!(serde_json::from_str::<ArchConfig>(r#"{"n_layers": 2, "dilations": [1]}"#).is_err());
        assert!(serde_json::from_str::<ArchConfig>(r#"{"n_classes": 10}"#).is_err());
        let back: ArchConfig = serde_json::from_str(&serde_json::to_string(&arch).unwrap()).unwrap();
        assert_eq!(back, arch);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let arch = ArchConfig::new(8, 8, 2, 3).unwrap();
        let a = init_model(&arch, 0).unwrap();
        let b = init_model(&arch, 0).unwrap();
        let c = init_model(&arch, 2022).unwrap();
        assert_eq!(a, b);
        assert!(a.params().iter().zip(c.params()).any(|(x, y)| x != y));
        let bound = 1.0 / ((8 * 3) as f32).sqrt();
        assert!(a.tensor(Tensor::ConvWeight(0)).iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn softmax_normalized_and_shift_invariant() {
        let arch = ArchConfig::new(4, 6, 3, 3).unwrap();
        let model = init_model(&arch, 5).unwrap();
        for seed in 0..20 {
            let out = model.forward(&random_window(&arch, seed)).unwrap();
            assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(out.probs.iter().all(|p| *p >= 0.0));
            let shifted = out.logits.map(|l| l + 37.5);
            let (p2, _) = kernel::softmax_xent(&shifted, 0);
            for (a, b) in out.probs.iter().zip(&p2) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_model_is_uniform_with_ln12_loss() {
        let arch = ArchConfig::new(4, 6, 2, 3).unwrap();
        let model = TemporalModel::from_params(arch.clone(), vec![0.0; arch.n_params()], 0).unwrap();
        let window = random_window(&arch, 1);
        let out = model.forward(&window).unwrap();
        assert!(out.probs.iter().all(|p| (p - 1.0 / 12.0).abs() < 1e-12));
        let batch: Vec<_> = (0..3)
            .map(|t| WindowSample {
                window: window.clone(),
                target: t * 4,
            })
            .collect();
        let (loss, grads) = model.loss_and_grads(&batch).unwrap();
        assert!((loss - 12f64.ln()).abs() < 1e-12);
        assert!((loss - 2.4849).abs() < 1e-4);
        for t in [
            Tensor::ConvWeight(1),
            Tensor::ConvBias(0),
            Tensor::OutWeight,
            Tensor::OutBias,
        ] {
            assert_eq!(grads.tensor(t).len(), model.tensor(t).len());
        }
        assert_eq!(grads.tensor(Tensor::ConvWeight(0)).len(), 3 * 6 * 4);
        assert_eq!(grads.as_slice().len(), model.params().len());
    }

    #[test]
    fn confident_correct_output_has_near_zero_loss() {
        let arch = ArchConfig::new(4, 6, 2, 3).unwrap();
        let mut params = vec![0.0; arch.n_params()];
        let layout = Layout::new(&arch);
        params[layout.out_bias + 5] = 40.0;
        let model = TemporalModel::from_params(arch.clone(), params, 0).unwrap();
        let (loss, _) = model
            .loss_and_grads(&[WindowSample {
                window: random_window(&arch, 2),
                target: 5,
            }])
            .unwrap();
        assert!(loss >= 0.0 && loss < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let arch = ArchConfig::new(4, 6, 2, 3).unwrap();
        let model = init_model(&arch, 1).unwrap();
        assert!(model.forward(&[0.0; 3]).is_err());
        assert!(model.loss_and_grads(&[]).is_err());
        let seq = FeatureSequence::new(3, vec![0.0; 6], vec![0, 1]).unwrap();
        assert!(model.predict_sequence(&seq, &Normalizer::identity(3)).is_err());
        assert!(TemporalModel::from_params(arch, vec![0.0; 2], 0).is_err());
    }

    #[test]
    fn predict_single_position_uses_replicated_window() {
        let arch = ArchConfig::new(3, 5, 2, 3).unwrap();
        let model = init_model(&arch, 3).unwrap();
        let seq = FeatureSequence::new(3, vec![0.5, -1.0, 2.0], vec![8]).unwrap();
        let pred = model.predict_sequence(&seq, &Normalizer::identity(3)).unwrap();
        assert_eq!(pred.labels.len(), 1);
        let window: Vec<f32> = (0..arch.context_len()).flat_map(|_| [0.5, -1.0, 2.0]).collect();
        assert_eq!(pred.probs[0], model.forward(&window).unwrap().probs);
    }

    #[test]
    fn constant_sequence_gives_constant_predictions() {
        let arch = ArchConfig::new(3, 5, 3, 3).unwrap();
        let model = init_model(&arch, 4).unwrap();
        let t = 40;
        let seq = FeatureSequence::new(3, [0.3f32, 0.1, -0.7].repeat(t), (0..t as u64).collect()).unwrap();
        let pred = model.predict_sequence(&seq, &Normalizer::identity(3)).unwrap();
        assert_eq!(pred.probs.len(), t);
        assert!(pred.probs.iter().all(|p| *p == pred.probs[0]));
        for p in &pred.probs {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn interior_positions_equal_raw_slice_forward() {
        let arch = ArchConfig::new(3, 5, 3, 3).unwrap();
        let len = arch.context_len();
        let model = init_model(&arch, 6).unwrap();
        let t_total = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values: Vec<f32> = (0..t_total * 3).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let seq = FeatureSequence::new(3, values.clone(), (0..t_total as u64).collect()).unwrap();
        let pred = model.predict_sequence(&seq, &Normalizer::identity(3)).unwrap();
        let half = len / 2;
        for t in half..t_total - half {
            let slice = &values[(t - half) * 3..(t + half + 1) * 3];
            assert_eq!(pred.probs[t], model.forward(slice).unwrap().probs);
        }
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5, 0.1]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }
}
