#![allow(dead_code)]

use intent_explain::corpus::{Dataset, ParsedUtterance, Record, Token, Upos};
use intent_explain::metrics::{token_f1, topk_rationale, Rationale};
use std::collections::BTreeMap;

use intent_explain::model::{explain, ClassifierParams, Vocabulary, PAD_TOKEN, UNK_TOKEN};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A single-root utterance with every other token attached to the first.
pub fn flat_utterance(id: &str, forms: &[String], intent: &str) -> ParsedUtterance {
    let tokens = forms
        .iter()
        .enumerate()
        .map(|(i, f)| Token {
            index: i + 1,
            form: f.clone(),
            upos: Upos::Noun,
            head: if i == 0 { 0 } else { 1 },
            deprel: if i == 0 { "root".into() } else { "dep".into() },
        })
        .collect();
    ParsedUtterance {
        id: id.to_string(),
        text: forms.join(" "),
        tokens,
        intent: intent.to_string(),
        slots: None,
    }
}

/// Synthetic corpus shape used for the joint-training check.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub samples: usize,
    pub classes: usize,
    pub vocab: usize,
    pub signal_per_class: usize,
    /// Class-correlated words that are never part of the gold mask.
    pub decoys_per_class: usize,
    /// Probability that each decoy slot holds one of the class's decoys
    /// rather than a neutral filler.
    pub decoy_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for Synthetic {
    fn default() -> Self {
        Synthetic {
            samples: 500,
            classes: 8,
            vocab: 200,
            signal_per_class: 2,
            decoys_per_class: 0,
            decoy_rate: 0.0,
            min_len: 6,
            max_len: 10,
        }
    }
}

impl Synthetic {
    /// Every utterance holds its class's signal words (masked) at random
    /// positions among filler words (unmasked).
    pub fn generate(&self, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let word = |i: usize| format!("tok{i:03}");
        let signal_words = self.classes * self.signal_per_class;
        let decoy_words = self.classes * self.decoys_per_class;
        assert!(signal_words + decoy_words < self.vocab);
        let fillers: Vec<usize> = (signal_words + decoy_words..self.vocab).collect();
        let mut records = Vec::with_capacity(self.samples);
        for n in 0..self.samples {
            let class = n % self.classes;
            let len = rng.random_range(self.min_len..=self.max_len);
            let mut slots: Vec<(usize, u8)> = (0..self.signal_per_class)
                .map(|s| (class * self.signal_per_class + s, 1))
                .collect();
            while slots.len() < len {
                let w = if self.decoys_per_class > 0 && rng.random_bool(self.decoy_rate) {
                    signal_words
                        + class * self.decoys_per_class
                        + rng.random_range(0..self.decoys_per_class)
                } else {
                    *fillers.choose(&mut rng).unwrap()
                };
                slots.push((w, 0));
            }
            slots.shuffle(&mut rng);
            let forms: Vec<String> = slots.iter().map(|&(w, _)| word(w)).collect();
            let mask: Vec<u8> = slots.iter().map(|&(_, m)| m).collect();
            let u = flat_utterance(&format!("syn{n:04}"), &forms, &format!("class{class}"));
            records.push(Record {
                utterance: u,
                mask: Some(mask),
            });
        }
        Dataset::new(records).unwrap()
    }
}

/// Mean top-k Token F1 of IG explanations against the gold masks.
pub fn mean_topk_f1(params: &ClassifierParams, data: &Dataset, k: usize, steps: usize) -> f64 {
    let mut sum = 0.0;
    for r in &data.records {
        let forms: Vec<&str> = r.utterance.forms().collect();
        let ids = params.vocabulary.encode(&forms);
        let map = explain(params, r.id(), &ids, steps).unwrap();
        let pred = topk_rationale(&map.attributions, k);
        let gold = Rationale::from_mask(r.mask.as_ref().unwrap());
        sum += token_f1(&pred, &gold).unwrap();
    }
    sum / data.len() as f64
}

/// Classification accuracy on `data`.
pub fn accuracy(params: &ClassifierParams, data: &Dataset) -> f64 {
    let hits = data
        .records
        .iter()
        .filter(|r| {
            let forms: Vec<&str> = r.utterance.forms().collect();
            params.predict_label(&forms).0 == r.utterance.intent
        })
        .count();
    hits as f64 / data.len() as f64
}

/// A freshly initialised model (the same distribution training starts from)
/// over `vocab_size` ids, PAD and UNK included.
pub fn init_model(classes: usize, dim: usize, vocab_size: usize, seed: u64) -> ClassifierParams {
    let mut map = BTreeMap::new();
    map.insert(0, PAD_TOKEN.to_string());
    map.insert(1, UNK_TOKEN.to_string());
    for id in 2..vocab_size {
        map.insert(id, format!("w{id}"));
    }
    let labels = (0..classes).map(|j| format!("c{j}")).collect();
    let vocabulary = Vocabulary::from_parts(map, labels).unwrap();
    ClassifierParams::init(vocabulary, dim, &mut ChaCha8Rng::seed_from_u64(seed))
}
