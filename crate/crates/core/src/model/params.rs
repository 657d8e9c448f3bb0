use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{Vocabulary, PAD_ID};
use crate::corpus::DEFAULT_MAX_LEN;
use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 64;

/// Mean-of-embeddings classifier: `softmax(W · mean(E[ids]) + b)`.
///
/// All matrices are row-major. Row `PAD_ID` of the embedding table is
/// held at zero and PAD positions are left out of the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub vocabulary: Vocabulary,
    pub dim: usize,
    pub embeddings: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub max_len: usize,
}

impl ClassifierParams {
    pub fn zeros(vocabulary: Vocabulary, dim: usize) -> Self {
        let v = vocabulary.len();
        let c = vocabulary.num_classes();
        ClassifierParams {
            vocabulary,
            dim,
            embeddings: vec![0.0; v * dim],
            weights: vec![0.0; c * dim],
            bias: vec![0.0; c],
            max_len: DEFAULT_MAX_LEN,
        }
    }

    /// Uniform initialisation; embeddings in ±0.5, weights in the Glorot range, zero bias.
    pub fn init(vocabulary: Vocabulary, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(vocabulary, dim);
        for x in p.embeddings.iter_mut().skip(dim) {
            *x = rng.random_range(-0.5..0.5);
        }
        let limit = (6.0 / (dim + p.num_classes()) as f64).sqrt();
        for x in p.weights.iter_mut() {
            *x = rng.random_range(-limit..limit);
        }
        p
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings.len() / self.dim
    }

    pub fn embedding(&self, id: usize) -> &[f64] {
        &self.embeddings[id * self.dim..(id + 1) * self.dim]
    }

    pub fn weight_row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn zero_pad_row(&mut self) {
        self.embeddings[PAD_ID * self.dim..(PAD_ID + 1) * self.dim].fill(0.0);
    }

    pub fn check_ids(&self, ids: &[usize]) -> Result<()> {
        let size = self.vocab_size();
        match ids.iter().find(|&&id| id >= size) {
            Some(&id) => Err(Error::TokenOutOfRange { id, size }),
            None => Ok(()),
        }
    }

    /// Mean of the non-PAD embeddings and the number of non-PAD tokens.
    pub(crate) fn pooled(&self, ids: &[usize]) -> (Vec<f64>, usize) {
        let mut h = vec![0.0; self.dim];
        let mut n = 0;
        for &id in ids.iter().filter(|&&id| id != PAD_ID) {
            n += 1;
            for (acc, x) in h.iter_mut().zip(self.embedding(id)) {
                *acc += x;
            }
        }
        if n > 0 {
            let inv = 1.0 / n as f64;
            h.iter_mut().for_each(|x| *x *= inv);
        }
        (h, n)
    }

    /// `W · v`, one entry per class.
    pub(crate) fn project(&self, v: &[f64]) -> Vec<f64> {
        (0..self.num_classes())
            .map(|j| dot(self.weight_row(j), v))
            .collect()
    }

    pub fn forward(&self, ids: &[usize]) -> Result<Vec<f64>> {
        self.check_ids(ids)?;
        let (h, _) = self.pooled(ids);
        let logits: Vec<f64> = self
            .project(&h)
            .into_iter()
            .zip(&self.bias)
            .map(|(z, b)| z + b)
            .collect();
        Ok(softmax(&logits))
    }

    /// Lowercases, maps OOV words to UNK, truncates to `max_len` and
    /// returns the argmax class (lowest index on ties) with the probabilities.
    pub fn predict<S: AsRef<str>>(&self, words: &[S]) -> (usize, Vec<f64>) {
        let mut ids = self.vocabulary.encode(words);
        ids.truncate(self.max_len);
        let probs = self.forward(&ids).expect("encoded ids are in range");
        (argmax(&probs), probs)
    }

    pub fn predict_label<S: AsRef<str>>(&self, words: &[S]) -> (&str, Vec<f64>) {
        let (class, probs) = self.predict(words);
        (&self.vocabulary.labels()[class], probs)
    }

    pub fn is_finite(&self) -> bool {
        self.embeddings
            .iter()
            .chain(&self.weights)
            .chain(&self.bias)
            .all(|x| x.is_finite())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; the earliest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
