//! Cross-entropy, attribution-prior and joint losses with their exact
//! gradients through the integrated-gradients quadrature.

use super::attribution::{integrated_gradients_all, path_jacobian, token_attribution};
use super::params::{softmax, ClassifierParams};
use super::vocab::PAD_ID;
use crate::error::{Error, Result};

const PROB_FLOOR: f64 = 1e-12;

pub fn cross_entropy(probabilities: &[f64], gold: usize) -> Result<f64> {
    let p = probabilities.get(gold).ok_or(Error::ClassOutOfRange {
        index: gold,
        classes: probabilities.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Sum of squared differences between attributions and binary targets.
pub fn prior_loss(attributions: &[f64], targets: &[u8]) -> Result<f64> {
    if attributions.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: targets.len(),
            actual: attributions.len(),
        });
    }
    Ok(attributions
        .iter()
        .zip(targets)
        .map(|(a, &t)| (a - f64::from(t)).powi(2))
        .sum())
}

pub fn joint_loss(ce: f64, prior: f64, lambda: f64) -> f64 {
    ce + lambda * prior
}

/// Prior loss of one utterance under the model, PAD positions excluded.
pub fn sample_prior(
    params: &ClassifierParams,
    ids: &[usize],
    mask: &[u8],
    steps: usize,
) -> Result<f64> {
    let ig = integrated_gradients_all(params, ids, steps)?;
    let a = token_attribution(&ig);
    let (a, t): (Vec<f64>, Vec<u8>) = ids
        .iter()
        .zip(a.into_iter().zip(mask.iter().copied()))
        .filter(|(&id, _)| id != PAD_ID)
        .map(|(_, pair)| pair)
        .unzip();
    prior_loss(&a, &t)
}

/// Dense gradient buffers shaped like [`ClassifierParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embeddings: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &ClassifierParams) -> Self {
        Gradients {
            embeddings: vec![0.0; p.embeddings.len()],
            weights: vec![0.0; p.weights.len()],
            bias: vec![0.0; p.bias.len()],
        }
    }

    pub fn clear(&mut self) {
        self.embeddings.fill(0.0);
        self.weights.fill(0.0);
        self.bias.fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SampleLoss {
    pub ce: f64,
    pub prior: f64,
}

/// One training example as seen by the loss.
pub struct Example<'a> {
    pub ids: &'a [usize],
    pub gold: usize,
    pub mask: Option<&'a [u8]>,
}

/// Computes `ce + lambda·prior` for one example and accumulates
/// `scale ×` its gradient into `grads`. With `lambda == 0` the prior is
/// neither computed nor differentiated and is reported as zero.
pub fn accumulate_gradient(
    params: &ClassifierParams,
    ex: &Example<'_>,
    lambda: f64,
    steps: usize,
    scale: f64,
    grads: &mut Gradients,
) -> Result<SampleLoss> {
    params.check_ids(ex.ids)?;
    let c = params.num_classes();
    let d = params.dim;
    if ex.gold >= c {
        return Err(Error::ClassOutOfRange {
            index: ex.gold,
            classes: c,
        });
    }
    let (h, n) = params.pooled(ex.ids);
    let zl = params.project(&h);

    // dL/dz for the forward logits, dL/dh, and dL/dx_i per position
    let mut dzl = vec![0.0; c];
    let mut dh = vec![0.0; d];
    let mut dx: Vec<Vec<f64>> = vec![Vec::new(); ex.ids.len()];

    let logits: Vec<f64> = zl.iter().zip(&params.bias).map(|(z, b)| z + b).collect();
    let probs = softmax(&logits);
    let ce = cross_entropy(&probs, ex.gold)?;
    for j in 0..c {
        let dz = scale * (probs[j] - if j == ex.gold { 1.0 } else { 0.0 });
        grads.bias[j] += dz;
        dzl[j] += dz;
    }

    let mut prior = 0.0;
    if lambda != 0.0 && n > 0 {
        let mask = ex
            .mask
            .ok_or_else(|| Error::Config("prior loss needs an explanation mask".into()))?;
        if mask.len() != ex.ids.len() {
            return Err(Error::LengthMismatch {
                expected: ex.ids.len(),
                actual: mask.len(),
            });
        }
        let coef = scale * lambda;
        let inv_n = 1.0 / n as f64;
        let inv_c = 1.0 / c as f64;
        let path = path_jacobian(&zl, &params.bias, steps);
        let mj = &path.mean;

        // gamma = Σ_i G_i u_iᵀ / n, the upstream gradient of the averaged Jacobian
        let mut gamma = vec![0.0; c * c];
        for (i, &id) in ex.ids.iter().enumerate() {
            if id == PAD_ID {
                continue;
            }
            let x = params.embedding(id);
            let u = params.project(x);
            let ig: Vec<f64> = (0..c)
                .map(|a| (0..c).map(|b| mj[a * c + b] * u[b]).sum::<f64>() * inv_n)
                .collect();
            let attribution = ig.iter().map(|v| v.abs()).sum::<f64>() * inv_c;
            let diff = attribution - f64::from(mask[i]);
            prior += diff * diff;

            let g: Vec<f64> = ig
                .iter()
                .map(|v| coef * 2.0 * diff * inv_c * sign(*v))
                .collect();
            // through u_i = W x_i (M symmetric)
            let du: Vec<f64> = (0..c)
                .map(|a| (0..c).map(|b| mj[a * c + b] * g[b]).sum::<f64>() * inv_n)
                .collect();
            let mut dxi = vec![0.0; d];
            for a in 0..c {
                let w = params.weight_row(a);
                let gw = &mut grads.weights[a * d..(a + 1) * d];
                for k in 0..d {
                    gw[k] += du[a] * x[k];
                    dxi[k] += du[a] * w[k];
                }
                for b in 0..c {
                    gamma[a * c + b] += g[a] * u[b] * inv_n;
                }
            }
            dx[i] = dxi;
        }

        let inv_s = 1.0 / steps as f64;
        for (k, q) in path.probs.iter().enumerate() {
            let alpha = (k + 1) as f64 * inv_s;
            // dq_l = (1/S)(Γ_ll − (Γ q)_l − (Γᵀ q)_l)
            let dq: Vec<f64> = (0..c)
                .map(|l| {
                    let row: f64 = (0..c).map(|b| gamma[l * c + b] * q[b]).sum();
                    let col: f64 = (0..c).map(|a| gamma[a * c + l] * q[a]).sum();
                    inv_s * (gamma[l * c + l] - row - col)
                })
                .collect();
            let qdq: f64 = q.iter().zip(&dq).map(|(a, b)| a * b).sum();
            for l in 0..c {
                let dz = q[l] * (dq[l] - qdq);
                grads.bias[l] += dz;
                dzl[l] += alpha * dz;
            }
        }
    }

    // zl = W h
    for (a, &g) in dzl.iter().enumerate() {
        let w = params.weight_row(a);
        let gw = &mut grads.weights[a * d..(a + 1) * d];
        for k in 0..d {
            gw[k] += g * h[k];
            dh[k] += g * w[k];
        }
    }
    if n > 0 {
        let inv_n = 1.0 / n as f64;
        for (i, &id) in ex.ids.iter().enumerate() {
            if id == PAD_ID {
                continue;
            }
            let ge = &mut grads.embeddings[id * d..(id + 1) * d];
            for k in 0..d {
                ge[k] += dh[k] * inv_n + dx[i].get(k).copied().unwrap_or(0.0);
            }
        }
    }
    Ok(SampleLoss { ce, prior })
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
