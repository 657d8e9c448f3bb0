//! Integrated gradients for the mean-of-embeddings classifier.
//!
//! The baseline is the all-PAD input (zero embeddings). Along the straight
//! path `α·x` the pooled vector is `α·h`, so the gradient of class `j`'s
//! probability with respect to token embedding `x_i` is
//! `p_j(α) (W_j − Σ_l p_l(α) W_l) / n`. Contracting with `x_i` gives the
//! per-token attribution in terms of the token's logit contribution
//! `u_i = W x_i`:
//!
//! ```text
//! IG_i = (1/S) Σ_{k=1..S} J(p(k/S)) u_i / n,   J(q) = diag(q) − q qᵀ
//! ```

use super::params::{argmax, softmax, ClassifierParams};
use super::vocab::PAD_ID;
use crate::error::Result;

/// Row-major `m × c` matrix of per-class token attributions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAttributions {
    pub tokens: usize,
    pub classes: usize,
    pub values: Vec<f64>,
}

impl ClassAttributions {
    pub fn get(&self, token: usize, class: usize) -> f64 {
        self.values[token * self.classes + class]
    }

    pub fn row(&self, token: usize) -> &[f64] {
        &self.values[token * self.classes..(token + 1) * self.classes]
    }

    pub fn column(&self, class: usize) -> Vec<f64> {
        (0..self.tokens).map(|i| self.get(i, class)).collect()
    }
}

/// Attributions and prediction for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub id: String,
    pub per_class: ClassAttributions,
    /// Class-averaged attribution magnitude per token, see [`token_attribution`].
    pub attributions: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
}

/// Averaged softmax Jacobian `(1/S) Σ_k J(p(k/S))` along the IG path, plus the
/// path probabilities `p(k/S)`.
pub(crate) struct PathJacobian {
    pub mean: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
}

pub(crate) fn path_jacobian(pooled_logits: &[f64], bias: &[f64], steps: usize) -> PathJacobian {
    let c = bias.len();
    let mut mean = vec![0.0; c * c];
    let mut probs = Vec::with_capacity(steps);
    let inv = 1.0 / steps as f64;
    for k in 1..=steps {
        let alpha = k as f64 * inv;
        let z: Vec<f64> = pooled_logits
            .iter()
            .zip(bias)
            .map(|(zl, b)| alpha * zl + b)
            .collect();
        let q = softmax(&z);
        for a in 0..c {
            for b in 0..c {
                let d = if a == b { q[a] } else { 0.0 };
                mean[a * c + b] += inv * (d - q[a] * q[b]);
            }
        }
        probs.push(q);
    }
    PathJacobian { mean, probs }
}

/// Integrated gradients of every class probability, one row per position of
/// `ids`. PAD positions receive zero.
pub fn integrated_gradients_all(
    params: &ClassifierParams,
    ids: &[usize],
    steps: usize,
) -> Result<ClassAttributions> {
    assert!(steps >= 1, "integrated gradients needs at least one step");
    params.check_ids(ids)?;
    let c = params.num_classes();
    let m = ids.len();
    let mut values = vec![0.0; m * c];
    let (h, n) = params.pooled(ids);
    if n > 0 {
        let path = path_jacobian(&params.project(&h), &params.bias, steps);
        let inv_n = 1.0 / n as f64;
        for (i, &id) in ids.iter().enumerate() {
            if id == PAD_ID {
                continue;
            }
            let u = params.project(params.embedding(id));
            for a in 0..c {
                let s: f64 = (0..c).map(|b| path.mean[a * c + b] * u[b]).sum();
                values[i * c + a] = s * inv_n;
            }
        }
    }
    Ok(ClassAttributions {
        tokens: m,
        classes: c,
        values,
    })
}

/// Per-token integrated gradients of class `target`'s probability.
pub fn integrated_gradients(
    params: &ClassifierParams,
    ids: &[usize],
    target: usize,
    steps: usize,
) -> Result<Vec<f64>> {
    let c = params.num_classes();
    if target >= c {
        return Err(crate::error::Error::ClassOutOfRange {
            index: target,
            classes: c,
        });
    }
    Ok(integrated_gradients_all(params, ids, steps)?.column(target))
}

/// Arithmetic mean across classes for each token.
pub fn class_averaged_attribution(per_class: &ClassAttributions) -> Vec<f64> {
    let inv = 1.0 / per_class.classes as f64;
    (0..per_class.tokens)
        .map(|i| per_class.row(i).iter().sum::<f64>() * inv)
        .collect()
}

/// Token attribution used for the prior loss and for explanations: the
/// class average of the absolute per-class attributions.
///
/// Class probabilities sum to one along the whole path, so signed per-class
/// probability attributions cancel exactly under a plain average.
pub fn token_attribution(per_class: &ClassAttributions) -> Vec<f64> {
    let magnitudes = ClassAttributions {
        tokens: per_class.tokens,
        classes: per_class.classes,
        values: per_class.values.iter().map(|v| v.abs()).collect(),
    };
    class_averaged_attribution(&magnitudes)
}

pub fn explain(
    params: &ClassifierParams,
    id: &str,
    ids: &[usize],
    steps: usize,
) -> Result<AttributionMap> {
    let probabilities = params.forward(ids)?;
    let per_class = integrated_gradients_all(params, ids, steps)?;
    Ok(AttributionMap {
        id: id.to_string(),
        attributions: token_attribution(&per_class),
        predicted_class: argmax(&probabilities),
        probabilities,
        per_class,
    })
}

/// Zero-baseline integrated gradients of an arbitrary differentiable
/// function of a token-embedding sequence. `grad` returns the gradient with
/// respect to every embedding at the given point. Attributions are summed
/// over embedding dimensions.
pub fn path_integrated_gradients<F>(inputs: &[Vec<f64>], grad: F, steps: usize) -> Vec<f64>
where
    F: Fn(&[Vec<f64>]) -> Vec<Vec<f64>>,
{
    let mut totals = vec![0.0; inputs.len()];
    for k in 1..=steps {
        let alpha = k as f64 / steps as f64;
        let point: Vec<Vec<f64>> = inputs
            .iter()
            .map(|x| x.iter().map(|v| alpha * v).collect())
            .collect();
        for (i, g) in grad(&point).iter().enumerate() {
            totals[i] += g.iter().zip(&inputs[i]).map(|(g, x)| g * x).sum::<f64>();
        }
    }
    totals.iter().map(|t| t / steps as f64).collect()
}
