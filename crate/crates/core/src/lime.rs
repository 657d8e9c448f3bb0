//! Perturbation-based local surrogate explanations (LIME for text).
//!
//! Perturbations delete tokens (order preserved), the same ablation the
//! faithfulness metrics use.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::argmax;

#[derive(Debug, Clone, PartialEq)]
pub struct LimeConfig {
    pub num_samples: usize,
    pub kernel_width: f64,
    pub ridge_alpha: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            num_samples: 1000,
            kernel_width: 25.0,
            ridge_alpha: 1.0,
            seed: 0,
        }
    }
}

impl LimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Config("LIME needs at least one sample".into()));
        }
        if !(self.kernel_width > 0.0 && self.kernel_width.is_finite()) {
            return Err(Error::Config("kernel width must be positive".into()));
        }
        if !(self.ridge_alpha >= 0.0 && self.ridge_alpha.is_finite()) {
            return Err(Error::Config("ridge alpha must be non-negative".into()));
        }
        Ok(())
    }
}

/// Binary keep/drop rows and each row's cosine distance to the all-ones row.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbations {
    pub masks: Vec<Vec<u8>>,
    pub distances: Vec<f64>,
}

/// Cosine distance between a binary row and the all-ones vector of the same
/// length. An all-zero row is taken to be at distance 1.
pub fn cosine_distance_to_full(row: &[u8]) -> f64 {
    let ones = row.iter().filter(|&&v| v == 1).count();
    if ones == 0 {
        return 1.0;
    }
    1.0 - (ones as f64 / row.len() as f64).sqrt()
}

/// Row 0 keeps every token. Every other row draws a removal count uniformly
/// from `1..=m` and removes that many distinct positions uniformly.
pub fn perturb_samples(m: usize, config: &LimeConfig) -> Perturbations {
    assert!(m >= 1, "cannot perturb an empty utterance");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut masks = Vec::with_capacity(config.num_samples);
    masks.push(vec![1u8; m]);
    for _ in 1..config.num_samples {
        let remove = rng.random_range(1..=m);
        let mut row = vec![1u8; m];
        for i in sample(&mut rng, m, remove) {
            row[i] = 0;
        }
        masks.push(row);
    }
    let distances = masks.iter().map(|r| cosine_distance_to_full(r)).collect();
    Perturbations { masks, distances }
}

pub fn kernel_weight(distance: f64, kernel_width: f64) -> f64 {
    (-(distance * distance) / (kernel_width * kernel_width)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

/// Weighted ridge regression with an unpenalized intercept, solved from the
/// `(m+1)×(m+1)` normal equations.
pub fn fit_weighted(
    masks: &[Vec<u8>],
    outputs: &[f64],
    weights: &[f64],
    ridge_alpha: f64,
) -> Result<Surrogate> {
    let rows = masks.len();
    if rows == 0 {
        return Err(Error::Config("surrogate fit needs at least one row".into()));
    }
    if outputs.len() != rows || weights.len() != rows {
        return Err(Error::LengthMismatch {
            expected: rows,
            actual: outputs.len().min(weights.len()),
        });
    }
    let m = masks[0].len();
    if let Some(bad) = masks.iter().find(|r| r.len() != m) {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: bad.len(),
        });
    }
    let dim = m + 1;
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    let mut features = vec![0.0; dim];
    for ((row, &y), &w) in masks.iter().zip(outputs).zip(weights) {
        features[0] = 1.0;
        for (f, &v) in features[1..].iter_mut().zip(row) {
            *f = f64::from(v);
        }
        for a in 0..dim {
            if features[a] == 0.0 {
                continue;
            }
            rhs[a] += w * y * features[a];
            for b in 0..dim {
                gram[(a, b)] += w * features[a] * features[b];
            }
        }
    }
    for a in 1..dim {
        gram[(a, a)] += ridge_alpha;
    }

    let scale = gram.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let lu = gram.lu();
    let pivot_min = lu
        .u()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if scale == 0.0 || pivot_min <= 1e-12 * scale {
        return Err(Error::Singular);
    }
    let beta = lu.solve(&rhs).ok_or(Error::Singular)?;
    Ok(Surrogate {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
    })
}

pub fn fit_surrogate(
    masks: &[Vec<u8>],
    outputs: &[f64],
    distances: &[f64],
    config: &LimeConfig,
) -> Result<Surrogate> {
    let weights: Vec<f64> = distances
        .iter()
        .map(|&d| kernel_weight(d, config.kernel_width))
        .collect();
    fit_weighted(masks, outputs, &weights, config.ridge_alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimeExplanation {
    pub attributions: Vec<f64>,
    pub intercept: f64,
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
    pub target_class: usize,
}

/// Explains `predict_fn` at `tokens`. The target defaults to the class
/// predicted on the full input.
pub fn lime_explain<T, F>(
    mut predict_fn: F,
    tokens: &[T],
    target_class: Option<usize>,
    config: &LimeConfig,
) -> Result<LimeExplanation>
where
    T: Clone,
    F: FnMut(&[T]) -> Result<Vec<f64>>,
{
    config.validate()?;
    let probabilities = predict_fn(tokens).map_err(|e| Error::Predict {
        row: 0,
        source: Box::new(e),
    })?;
    let predicted_class = argmax(&probabilities);
    let target = target_class.unwrap_or(predicted_class);
    if target >= probabilities.len() {
        return Err(Error::ClassOutOfRange {
            index: target,
            classes: probabilities.len(),
        });
    }
    if tokens.is_empty() {
        return Ok(LimeExplanation {
            attributions: Vec::new(),
            intercept: probabilities[target],
            probabilities,
            predicted_class,
            target_class: target,
        });
    }

    let perturbed = perturb_samples(tokens.len(), config);
    let mut outputs = Vec::with_capacity(perturbed.masks.len());
    outputs.push(probabilities[target]);
    for (row, mask) in perturbed.masks.iter().enumerate().skip(1) {
        let kept: Vec<T> = tokens
            .iter()
            .zip(mask)
            .filter(|(_, &keep)| keep == 1)
            .map(|(t, _)| t.clone())
            .collect();
        let probs = predict_fn(&kept).map_err(|e| Error::Predict {
            row,
            source: Box::new(e),
        })?;
        let p = *probs.get(target).ok_or(Error::ClassOutOfRange {
            index: target,
            classes: probs.len(),
        })?;
        outputs.push(p);
    }
    let fit = fit_surrogate(&perturbed.masks, &outputs, &perturbed.distances, config)?;
    Ok(LimeExplanation {
        attributions: fit.coefficients,
        intercept: fit.intercept,
        probabilities,
        predicted_class,
        target_class: target,
    })
}

/// Per-instance seed derived from a global seed and a record id (FNV-1a).
pub fn instance_seed(seed: u64, id: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in seed.to_le_bytes().iter().chain(id.as_bytes()) {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(seed: u64) -> LimeConfig {
        LimeConfig {
            seed,
            ..LimeConfig::default()
        }
    }

    #[test]
    fn single_token_rows() {
        let p = perturb_samples(1, &config(3));
        assert_eq!(p.masks[0], vec![1]);
        assert!(p.masks.iter().all(|r| r == &vec![1] || r == &vec![0]));
        // every perturbed row must drop something
        assert!(p.masks[1..].iter().all(|r| r == &vec![0]));
    }

    #[test]
    fn perturbation_rows() {
        let p = perturb_samples(6, &config(4));
        assert_eq!(p.masks.len(), 1000);
        assert_eq!(p.distances[0], 0.0);
        assert!(p.masks[1..].iter().all(|r| r.contains(&0)));
        assert_eq!(p, perturb_samples(6, &config(4)));
        assert_ne!(p, perturb_samples(6, &config(5)));
    }

    #[test]
    fn half_ones_distance() {
        let d = cosine_distance_to_full(&[1, 0, 1, 0]);
        assert!((d - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
        assert!((d - 0.2929).abs() < 1e-4);
        assert_eq!(cosine_distance_to_full(&[1, 1, 1]), 0.0);
    }

    #[test]
    fn kernel_weights_in_unit_interval() {
        let p = perturb_samples(5, &config(9));
        for &d in &p.distances {
            let w = kernel_weight(d, 25.0);
            assert!(w > 0.0 && w <= 1.0);
        }
        assert_eq!(kernel_weight(p.distances[0], 25.0), 1.0);
    }

    #[test]
    fn constant_outputs() {
        let p = perturb_samples(4, &config(1));
        let y = vec![0.37; p.masks.len()];
        let fit = fit_surrogate(&p.masks, &y, &p.distances, &config(1)).unwrap();
        assert!(fit.coefficients.iter().all(|c| c.abs() < 1e-12));
        assert!((fit.intercept - 0.37).abs() < 1e-12);
    }

    #[test]
    fn recovers_linear_function() {
        let truth = [0.5, -0.25, 0.0, 1.5, 0.125];
        let bias = 0.2;
        let p = perturb_samples(truth.len(), &config(7));
        let y: Vec<f64> = p
            .masks
            .iter()
            .map(|r| {
                bias + r
                    .iter()
                    .zip(&truth)
                    .map(|(&x, w)| f64::from(x) * w)
                    .sum::<f64>()
            })
            .collect();
        let cfg = LimeConfig {
            ridge_alpha: 0.0,
            ..config(7)
        };
        let fit = fit_surrogate(&p.masks, &y, &p.distances, &cfg).unwrap();
        for (a, b) in fit.coefficients.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!((fit.intercept - bias).abs() < 1e-6);
    }

    #[test]
    fn duplicates_equal_summed_weights() {
        let masks = vec![
            vec![1, 1, 0],
            vec![0, 1, 1],
            vec![1, 0, 1],
            vec![1, 1, 1],
            vec![0, 0, 1],
        ];
        let y = [0.9, 0.4, 0.6, 1.0, 0.1];
        let w = [0.5, 0.8, 0.9, 1.0, 0.7];
        // repeat row 1 three times
        let mut dm = masks.clone();
        let mut dy = y.to_vec();
        let mut dw = w.to_vec();
        for _ in 0..2 {
            dm.push(masks[1].clone());
            dy.push(y[1]);
            dw.push(w[1]);
        }
        let mut sw = w;
        sw[1] *= 3.0;
        let a = fit_weighted(&dm, &dy, &dw, 0.3).unwrap();
        let b = fit_weighted(&masks, &y, &sw, 0.3).unwrap();
        assert!((a.intercept - b.intercept).abs() < 1e-12);
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_without_ridge() {
        // column 2 is identical to column 1: rank deficient
        let masks = vec![vec![1, 1], vec![0, 0], vec![1, 1]];
        let r = fit_weighted(&masks, &[1.0, 0.0, 1.0], &[1.0; 3], 0.0);
        assert!(matches!(r, Err(Error::Singular)));
        assert!(fit_weighted(&masks, &[1.0, 0.0, 1.0], &[1.0; 3], 1.0).is_ok());
    }

    #[test]
    fn constant_predictor_zero_attributions() {
        let e = lime_explain(
            |_: &[u32]| Ok(vec![0.3, 0.7]),
            &[1, 2, 3, 4],
            None,
            &config(2),
        )
        .unwrap();
        assert_eq!(e.predicted_class, 1);
        assert!(e.attributions.iter().all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn deterministic_and_errors_carry_row() {
        let f = |t: &[u32]| -> Result<Vec<f64>> {
            let s: f64 = t.iter().map(|&x| f64::from(x)).sum::<f64>() / 10.0;
            Ok(vec![1.0 - s.min(1.0), s.min(1.0)])
        };
        let a = lime_explain(f, &[1, 2, 3], None, &config(5)).unwrap();
        let b = lime_explain(f, &[1, 2, 3], None, &config(5)).unwrap();
        assert_eq!(a, b);

        let mut calls = 0;
        let failing = |_: &[u32]| -> Result<Vec<f64>> {
            calls += 1;
            if calls == 4 {
                Err(Error::Config("boom".into()))
            } else {
                Ok(vec![0.5, 0.5])
            }
        };
        match lime_explain(failing, &[1, 2], None, &config(1)) {
            Err(Error::Predict { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn instance_seeds_differ_by_id() {
        assert_eq!(instance_seed(1, "a"), instance_seed(1, "a"));
        assert_ne!(instance_seed(1, "a"), instance_seed(1, "b"));
        assert_ne!(instance_seed(1, "a"), instance_seed(2, "a"));
    }
}
