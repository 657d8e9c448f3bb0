use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{accumulate_gradient, joint_loss, Example, Gradients};
use super::params::{ClassifierParams, DEFAULT_DIM};
use super::vocab::Vocabulary;
use crate::corpus::{Dataset, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub ig_steps: usize,
    pub seed: u64,
    pub max_len: usize,
    pub dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.0,
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.001,
            ig_steps: 50,
            seed: 0,
            max_len: DEFAULT_MAX_LEN,
            dim: DEFAULT_DIM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite non-negative number");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.ig_steps == 0 {
            return bad("integrated-gradients steps must be at least 1");
        }
        if self.dim == 0 || self.max_len == 0 {
            return bad("embedding dimension and max length must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLosses {
    pub epoch: usize,
    pub ce: f64,
    pub prior: f64,
    pub joint: f64,
}

/// Adam with the usual 0.9 / 0.999 / 1e-8 constants.
#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(params: &ClassifierParams, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
        }
    }

    pub fn step(&mut self, params: &mut ClassifierParams, grads: &Gradients) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.learning_rate;
        let eps = self.epsilon;
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        update(
            &mut params.embeddings,
            &grads.embeddings,
            &mut self.m.embeddings,
            &mut self.v.embeddings,
        );
        update(
            &mut params.weights,
            &grads.weights,
            &mut self.m.weights,
            &mut self.v.weights,
        );
        update(
            &mut params.bias,
            &grads.bias,
            &mut self.m.bias,
            &mut self.v.bias,
        );
        params.zero_pad_row();
    }
}

struct Encoded {
    ids: Vec<usize>,
    gold: usize,
    mask: Option<Vec<u8>>,
}

pub fn train(
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(ClassifierParams, Vec<EpochLosses>)> {
    train_with_observer(dataset, config, |_, _| {})
}

/// Trains and calls `observe(epoch, params)` after every epoch.
pub fn train_with_observer<F>(
    dataset: &Dataset,
    config: &TrainConfig,
    mut observe: F,
) -> Result<(ClassifierParams, Vec<EpochLosses>)>
where
    F: FnMut(usize, &ClassifierParams),
{
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    if config.lambda > 0.0 {
        if let Some(r) = dataset.records.iter().find(|r| r.mask.is_none()) {
            return Err(Error::InvalidRecord {
                id: r.id().to_string(),
                message: "lambda > 0 requires an explanation mask".into(),
            });
        }
    }

    let vocabulary = Vocabulary::build(dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ClassifierParams::init(vocabulary, config.dim, &mut rng);
    params.max_len = config.max_len;

    let examples: Vec<Encoded> = dataset
        .records
        .iter()
        .map(|r| {
            let forms: Vec<&str> = r.utterance.forms().take(config.max_len).collect();
            Encoded {
                ids: params.vocabulary.encode(&forms),
                gold: params
                    .vocabulary
                    .label_index(&r.utterance.intent)
                    .expect("label inventory built from this corpus"),
                mask: r
                    .mask
                    .as_ref()
                    .map(|m| m.iter().take(config.max_len).copied().collect()),
            }
        })
        .collect();

    let mut adam = Adam::new(&params, config.learning_rate);
    let mut grads = Gradients::zeros_like(&params);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut ce_sum, mut prior_sum) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let e = &examples[i];
                let ex = Example {
                    ids: &e.ids,
                    gold: e.gold,
                    mask: e.mask.as_deref(),
                };
                let loss = accumulate_gradient(
                    &params,
                    &ex,
                    config.lambda,
                    config.ig_steps,
                    scale,
                    &mut grads,
                )?;
                ce_sum += loss.ce;
                prior_sum += loss.prior;
            }
            adam.step(&mut params, &grads);
        }
        let n = examples.len() as f64;
        let (ce, prior) = (ce_sum / n, prior_sum / n);
        history.push(EpochLosses {
            epoch,
            ce,
            prior,
            joint: joint_loss(ce, prior, config.lambda),
        });
        observe(epoch, &params);
    }
    if !params.is_finite() {
        return Err(Error::Config(
            "training diverged to non-finite parameters".into(),
        ));
    }
    Ok((params, history))
}
