//! Analytic backward pass for the batch training loss.
//!
//! The batch loss is the mean over samples of
//!
//! ```text
//! L_br = L_class(logits, y) + lambda * L_dis(f_s, f_t)
//! L_dis(f_s, f_t) = 1 - (f_s . f_t) / (||f_s|| ||f_t||)
//! ```
//!
//! where `f_s` is the student embedding and `f_t` a fixed teacher embedding.
//! Gradients flow through the student only; teacher embeddings enter as
//! constants. The distillation term attaches to the embedding, so its
//! gradient reaches the head weights not at all and the layers through the
//! usual chain rule.

use crate::error::{Error, Result};
use crate::linalg;

use super::{class_loss, softmax, EmbeddingNet, Gradients};

/// Teacher embeddings and weight for the distillation term of one batch.
#[derive(Debug, Clone, Copy)]
pub struct DistillTarget<'a> {
    /// One embedding per batch sample, each of the student's embed dim.
    pub teacher_embeddings: &'a [Vec<f64>],
    pub lambda: f64,
}

/// Loss specification for one batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchLossSpec<'a> {
    pub targets: &'a [u32],
    /// `None` trains on the classification term alone.
    pub distill: Option<DistillTarget<'a>>,
}

/// Mean loss values reported alongside the gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    pub class_mean: f64,
    pub dis_mean: f64,
    /// `class_mean + lambda * dis_mean`; zero lambda when no distillation.
    pub br_mean: f64,
}

/// Computes mean-loss gradients for a batch of inputs.
///
/// With `distill: None`, or with `lambda == 0`, the result equals the
/// gradient of the classification loss alone and `dis_mean` is zero.
pub fn backward(
    net: &EmbeddingNet,
    inputs: &[&[f64]],
    spec: &BatchLossSpec,
) -> Result<(Gradients, LossComponents)> {
    if inputs.is_empty() {
        return Err(Error::Invalid {
            what: "batch",
            reason: "empty batch".into(),
        });
    }
    if spec.targets.len() != inputs.len() {
        return Err(Error::Shape {
            context: "batch targets",
            expected: inputs.len(),
            actual: spec.targets.len(),
        });
    }
    // A zero weight disables the term entirely so that the lambda = 0 path
    // and the teacher-absent path are the same code path.
    let distill = spec.distill.filter(|d| d.lambda != 0.0);
    let lambda = distill.map_or(0.0, |d| d.lambda);
    if let Some(d) = distill {
        if d.teacher_embeddings.len() != inputs.len() {
            return Err(Error::Shape {
                context: "teacher embeddings",
                expected: inputs.len(),
                actual: d.teacher_embeddings.len(),
            });
        }
        if !d.lambda.is_finite() || d.lambda < 0.0 {
            return Err(Error::Invalid {
                what: "lambda",
                reason: format!("must be finite and nonnegative, got {}", d.lambda),
            });
        }
    }

    let mut grads = Gradients::zeros_like(net);
    let mut class_sum = 0.0;
    let mut dis_sum = 0.0;

    for (i, x) in inputs.iter().enumerate() {
        let trace = net.forward_trace(x)?;
        let label = spec.targets[i];
        class_sum += class_loss(&trace.logits, label)?;

        // dL_class/dlogits = softmax(logits) - onehot(label).
        let mut dlogits = softmax(&trace.logits);
        dlogits[label as usize] -= 1.0;

        grads.head_weight.add_outer(&dlogits, &trace.embedding);
        let mut dembed = net.head_weight().matvec_t(&dlogits);

        if let Some(d) = distill {
            let t = &d.teacher_embeddings[i];
            if t.len() != trace.embedding.len() {
                return Err(Error::Shape {
                    context: "teacher embedding dim",
                    expected: trace.embedding.len(),
                    actual: t.len(),
                });
            }
            let (dis, ddis) = cosine_distance_grad(&trace.embedding, t)?;
            dis_sum += dis;
            for (g, dd) in dembed.iter_mut().zip(&ddis) {
                *g += d.lambda * dd;
            }
        }

        backprop_layers(net, &trace, dembed, &mut grads);
    }

    let inv = 1.0 / inputs.len() as f64;
    grads.scale(inv);
    let class_mean = class_sum * inv;
    let dis_mean = dis_sum * inv;
    let components = LossComponents {
        class_mean,
        dis_mean,
        br_mean: class_mean + lambda * dis_mean,
    };
    Ok((grads, components))
}

fn backprop_layers(
    net: &EmbeddingNet,
    trace: &super::Trace,
    dembed: Vec<f64>,
    grads: &mut Gradients,
) {
    let mut delta = dembed;
    for l in (0..net.layers().len()).rev() {
        let layer = &net.layers()[l];
        for (d, z) in delta.iter_mut().zip(&trace.preacts[l]) {
            *d *= layer.activation.derivative(*z);
        }
        grads.layers[l].weight.add_outer(&delta, &trace.activations[l]);
        for (gb, d) in grads.layers[l].bias.iter_mut().zip(&delta) {
            *gb += d;
        }
        if l > 0 {
            delta = layer.weight.matvec_t(&delta);
        }
    }
}

/// Value and student-side gradient of the cosine distance
/// `1 - (f . t) / (||f|| ||t||)`.
///
/// Errors with a degenerate-embedding report when either norm is at or below
/// the shared floor; the value is never clamped.
pub(crate) fn cosine_distance_grad(f: &[f64], t: &[f64]) -> Result<(f64, Vec<f64>)> {
    let nf = linalg::norm(f);
    let nt = linalg::norm(t);
    let floor = linalg::NORM_FLOOR;
    if nf <= floor {
        return Err(Error::DegenerateEmbedding { norm: nf });
    }
    if nt <= floor {
        return Err(Error::DegenerateEmbedding { norm: nt });
    }
    let cos = linalg::dot(f, t) / (nf * nt);
    let inv_cross = 1.0 / (nf * nt);
    let self_coef = cos / (nf * nf);
    let grad = f
        .iter()
        .zip(t)
        .map(|(fi, ti)| self_coef * fi - inv_cross * ti)
        .collect();
    Ok((1.0 - cos, grad))
}
