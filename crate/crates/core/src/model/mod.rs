//! Dense embedding network with an identity classification head.
//!
//! The network maps an input vector through fully connected layers to an
//! embedding `f` (the penultimate output), then through a linear head to
//! per-identity logits. Training uses softmax cross-entropy on the logits;
//! distillation losses attach to the embedding, never to the logits. All
//! arithmetic is `f64` and every operation is deterministic, so identical
//! seeds reproduce identical parameters bit for bit.

mod backprop;
mod checkpoint;

pub use backprop::{backward, BatchLossSpec, DistillTarget, LossComponents};
pub use checkpoint::CHECKPOINT_MAGIC;
pub(crate) use checkpoint::Reader;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation. The relu derivative at
    /// exactly zero is taken as zero.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One fully connected layer: `a = act(W x + b)` with `W` shaped out x in.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Architecture description used to build fresh networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub num_identities: u32,
}

impl NetArch {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::Invalid {
            what: "architecture",
            reason,
        };
        if self.input_dim == 0 {
            return Err(bad("input_dim must be positive".into()));
        }
        if self.embed_dim == 0 {
            return Err(bad("embed_dim must be positive".into()));
        }
        if self.num_identities == 0 {
            return Err(bad("num_identities must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(bad("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// Dense embedding network plus linear identity head.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingNet {
    layers: Vec<Layer>,
    /// Head weight shaped num_identities x embed_dim. The head has no bias.
    head_weight: Matrix,
    embed_dim: usize,
    num_identities: u32,
}

impl EmbeddingNet {
    pub fn new(layers: Vec<Layer>, head_weight: Matrix) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Invalid {
                what: "network",
                reason: "at least one layer is required".into(),
            });
        }
        for pair in layers.windows(2) {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(Error::Shape {
                    context: "layer chaining",
                    expected: pair[0].out_dim(),
                    actual: pair[1].in_dim(),
                });
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Shape {
                    context: "layer bias",
                    expected: layer.out_dim(),
                    actual: layer.bias.len(),
                });
            }
        }
        let embed_dim = layers.last().unwrap().out_dim();
        if head_weight.cols() != embed_dim {
            return Err(Error::Shape {
                context: "head weight columns",
                expected: embed_dim,
                actual: head_weight.cols(),
            });
        }
        if head_weight.rows() == 0 {
            return Err(Error::Invalid {
                what: "network",
                reason: "head must have at least one identity row".into(),
            });
        }
        let net = EmbeddingNet {
            num_identities: head_weight.rows() as u32,
            embed_dim,
            layers,
            head_weight,
        };
        if !net.params_finite() {
            return Err(Error::NonFinite {
                what: "network parameter",
            });
        }
        Ok(net)
    }

    /// Builds a network with weights and biases drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` using a ChaCha20 stream seeded
    /// from `seed`. Hidden layers use relu; the embedding layer is linear so
    /// embeddings cover the whole space rather than one orthant.
    pub fn seeded(arch: &NetArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(arch.hidden.len() + 1);
        let mut in_dim = arch.input_dim;
        for &width in &arch.hidden {
            layers.push(init_layer(&mut rng, in_dim, width, Activation::Relu));
            in_dim = width;
        }
        layers.push(init_layer(&mut rng, in_dim, arch.embed_dim, Activation::Identity));
        let bound = 1.0 / (arch.embed_dim as f64).sqrt();
        let head = init_matrix(&mut rng, arch.num_identities as usize, arch.embed_dim, bound);
        EmbeddingNet::new(layers, head)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn head_weight(&self) -> &Matrix {
        &self.head_weight
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn num_identities(&self) -> u32 {
        self.num_identities
    }

    pub fn param_count(&self) -> usize {
        let layer_params: usize = self
            .layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum();
        layer_params + self.head_weight.data().len()
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|v| v.is_finite()))
            && self.head_weight.is_finite()
    }

    /// Forward pass. Returns `(embedding, logits)`.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = self.forward_trace(x)?;
        Ok((trace.embedding, trace.logits))
    }

    /// Embedding only; the head product is skipped.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                context: "forward input",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut a = x.to_vec();
        for layer in &self.layers {
            let mut z = layer.weight.matvec(&a);
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi = layer.activation.apply(*zi + b);
            }
            a = z;
        }
        Ok(a)
    }

    pub(crate) fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                context: "forward input",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut preacts = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for layer in &self.layers {
            let mut z = layer.weight.matvec(activations.last().unwrap());
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
            }
            let a = z.iter().map(|&v| layer.activation.apply(v)).collect();
            preacts.push(z);
            activations.push(a);
        }
        let embedding = activations.last().unwrap().clone();
        let logits = self.head_weight.matvec(&embedding);
        Ok(Trace {
            activations,
            preacts,
            embedding,
            logits,
        })
    }

    /// Gradient of one logit with respect to the input vector.
    pub fn input_gradient(&self, x: &[f64], logit_index: usize) -> Result<Vec<f64>> {
        if logit_index >= self.num_identities as usize {
            return Err(Error::LabelOutOfRange {
                label: logit_index as u32,
                num_classes: self.num_identities as usize,
            });
        }
        let trace = self.forward_trace(x)?;
        let mut delta = self.head_weight.row(logit_index).to_vec();
        for (layer, preact) in self.layers.iter().zip(&trace.preacts).rev() {
            for (d, z) in delta.iter_mut().zip(preact) {
                *d *= layer.activation.derivative(*z);
            }
            delta = layer.weight.matvec_t(&delta);
        }
        Ok(delta)
    }

    /// One SGD update: `p <- p - lr * g`. Aborts without touching the
    /// network if any gradient entry is non-finite, and aborts if the update
    /// itself would produce a non-finite parameter.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::Shape {
                context: "gradient layer count",
                expected: self.layers.len(),
                actual: grads.layers.len(),
            });
        }
        if !lr.is_finite() {
            return Err(Error::NonFinite {
                what: "learning rate",
            });
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite {
                what: "gradient entry",
            });
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            if layer.weight.rows() != g.weight.rows() || layer.weight.cols() != g.weight.cols() {
                return Err(Error::Shape {
                    context: "gradient weight shape",
                    expected: layer.weight.data().len(),
                    actual: g.weight.data().len(),
                });
            }
            for (w, gw) in layer.weight.data_mut().iter_mut().zip(g.weight.data()) {
                *w -= lr * gw;
            }
            for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
        for (w, gw) in self
            .head_weight
            .data_mut()
            .iter_mut()
            .zip(grads.head_weight.data())
        {
            *w -= lr * gw;
        }
        if !self.params_finite() {
            return Err(Error::NonFinite {
                what: "updated parameter",
            });
        }
        Ok(())
    }

    /// True when every parameter of both networks is bitwise identical.
    pub fn params_bitwise_eq(&self, other: &EmbeddingNet) -> bool {
        self.to_bytes() == other.to_bytes()
    }

    /// Parameters in canonical flat order: per layer the row-major weight
    /// then the bias, then the row-major head weight. Gradients flatten in
    /// the same order, which finite-difference checks rely on.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            flat.extend_from_slice(layer.weight.data());
            flat.extend_from_slice(&layer.bias);
        }
        flat.extend_from_slice(self.head_weight.data());
        flat
    }

    /// Overwrites the parameter at `idx` in canonical flat order. Panics on
    /// an out-of-range index; this is a probe for studies and tests, not a
    /// training path.
    pub fn set_param(&mut self, idx: usize, value: f64) {
        let mut offset = idx;
        for layer in &mut self.layers {
            let w = layer.weight.data_mut();
            if offset < w.len() {
                w[offset] = value;
                return;
            }
            offset -= w.len();
            if offset < layer.bias.len() {
                layer.bias[offset] = value;
                return;
            }
            offset -= layer.bias.len();
        }
        self.head_weight.data_mut()[offset] = value;
    }

    pub fn param(&self, idx: usize) -> f64 {
        self.flat_params()[idx]
    }

    /// True when both networks have identical layer shapes and activations.
    pub fn same_arch(&self, other: &EmbeddingNet) -> bool {
        self.num_identities == other.num_identities
            && self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| {
                    a.in_dim() == b.in_dim()
                        && a.out_dim() == b.out_dim()
                        && a.activation == b.activation
                })
    }
}

pub(crate) struct Trace {
    /// `activations[0]` is the input; `activations[l + 1]` is layer `l`'s output.
    pub activations: Vec<Vec<f64>>,
    pub preacts: Vec<Vec<f64>>,
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
}

fn init_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize, bound: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

fn init_layer(rng: &mut ChaCha20Rng, in_dim: usize, out_dim: usize, act: Activation) -> Layer {
    let bound = 1.0 / (in_dim as f64).sqrt();
    let weight = init_matrix(rng, out_dim, in_dim, bound);
    let bias = (0..out_dim).map(|_| rng.random_range(-bound..=bound)).collect();
    Layer {
        weight,
        bias,
        activation: act,
    }
}

/// Per-parameter gradients, shaped exactly like the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    pub head_weight: Matrix,
}

#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &EmbeddingNet) -> Self {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
            head_weight: Matrix::zeros(
                net.head_weight().rows(),
                net.head_weight().cols(),
            ),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for layer in &mut self.layers {
            layer.weight.scale(s);
            for b in &mut layer.bias {
                *b *= s;
            }
        }
        self.head_weight.scale(s);
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|v| v.is_finite()))
            && self.head_weight.is_finite()
    }

    /// Same canonical flat order as [`EmbeddingNet::flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for layer in &self.layers {
            flat.extend_from_slice(layer.weight.data());
            flat.extend_from_slice(&layer.bias);
        }
        flat.extend_from_slice(self.head_weight.data());
        flat
    }
}

/// Softmax cross-entropy of one logit vector against an integer label,
/// computed through a shifted log-sum-exp so that logits with magnitude up
/// to about 1e4 stay finite.
pub fn class_loss(logits: &[f64], label: u32) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::Invalid {
            what: "logits",
            reason: "empty logit vector".into(),
        });
    }
    if (label as usize) >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: logits.len(),
        });
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::NonFinite { what: "logit" });
    }
    let sum: f64 = logits.iter().map(|&z| (z - m).exp()).sum();
    Ok(m + sum.ln() - logits[label as usize])
}

/// Softmax probabilities via the same shifted exponentials as [`class_loss`].
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Training hyperparameters shared by every pipeline stage.
///
/// The learning rate follows `lr0 * lr_decay_factor^(epoch / interval)` with
/// integer division, so the default schedule multiplies the rate by 0.9 every
/// 50 epochs. Setting `lr_decay_factor` to 0.1 instead selects a
/// divide-by-ten schedule; both are valid readings of "reduce by 10%".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    /// Distillation weight for the low-attribute student stage.
    pub lambda1: f64,
    /// Distillation weight for the full-data refinement stage.
    pub lambda2: f64,
    /// Distillation weight for one-step distillation.
    pub lambda_osd: f64,
    pub lr0: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_interval_epochs: u32,
    pub epochs: u32,
    pub batch_size: u32,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda_osd: 1.0,
            lr0: 0.1,
            lr_decay_factor: 0.9,
            lr_decay_interval_epochs: 50,
            epochs: 300,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::Invalid {
            what: "train spec",
            reason,
        };
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda_osd", self.lambda_osd),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(bad(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !self.lr0.is_finite() || self.lr0 <= 0.0 {
            return Err(bad(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !self.lr_decay_factor.is_finite()
            || self.lr_decay_factor <= 0.0
            || self.lr_decay_factor > 1.0
        {
            return Err(bad(format!(
                "lr_decay_factor must lie in (0, 1], got {}",
                self.lr_decay_factor
            )));
        }
        if self.lr_decay_interval_epochs == 0 {
            return Err(bad("lr_decay_interval_epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate for a zero-based epoch index.
    pub fn learning_rate(&self, epoch: u32) -> f64 {
        let steps = epoch / self.lr_decay_interval_epochs;
        self.lr0 * self.lr_decay_factor.powi(steps as i32)
    }

    /// Copy with a different epoch count; stages of one pipeline share every
    /// other setting.
    pub fn with_epochs(&self, epochs: u32) -> TrainSpec {
        TrainSpec {
            epochs,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> TrainSpec {
        TrainSpec {
            seed,
            ..self.clone()
        }
    }
}
