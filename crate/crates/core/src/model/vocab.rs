use std::collections::{BTreeMap, HashMap};

use crate::corpus::Dataset;
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Lowercased token ids plus the ordered label inventory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<String, usize>,
    tokens: Vec<String>,
    labels: Vec<String>,
}

impl Vocabulary {
    /// Ids are assigned in order of first occurrence in the corpus.
    pub fn build(dataset: &Dataset) -> Result<Self> {
        let mut vocab = Vocabulary {
            ids: HashMap::new(),
            tokens: Vec::new(),
            labels: dataset.labels.clone(),
        };
        vocab.push(PAD_TOKEN);
        vocab.push(UNK_TOKEN);
        for r in &dataset.records {
            for form in r.utterance.forms() {
                let lower = form.to_lowercase();
                if !vocab.ids.contains_key(&lower) {
                    vocab.push(&lower);
                }
            }
        }
        vocab.check_labels()?;
        Ok(vocab)
    }

    /// Rebuilds a vocabulary from a token→id map; ids must be dense.
    pub fn from_parts(map: BTreeMap<usize, String>, labels: Vec<String>) -> Result<Self> {
        let mut vocab = Vocabulary {
            ids: HashMap::new(),
            tokens: Vec::new(),
            labels,
        };
        for (expected, (id, token)) in map.into_iter().enumerate() {
            if id != expected {
                return Err(Error::ModelFormat(format!(
                    "vocabulary ids not dense at {expected}"
                )));
            }
            if vocab.ids.insert(token.clone(), id).is_some() {
                return Err(Error::ModelFormat(format!(
                    "duplicate vocabulary token {token:?}"
                )));
            }
            vocab.tokens.push(token);
        }
        if vocab.tokens.get(PAD_ID).map(String::as_str) != Some(PAD_TOKEN)
            || vocab.tokens.get(UNK_ID).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err(Error::ModelFormat(
                "ids 0 and 1 must be <pad> and <unk>".into(),
            ));
        }
        vocab.check_labels()?;
        Ok(vocab)
    }

    fn check_labels(&self) -> Result<()> {
        if self.labels.len() < 2 {
            return Err(Error::Config(format!(
                "need at least 2 intent classes, found {}",
                self.labels.len()
            )));
        }
        Ok(())
    }

    fn push(&mut self, token: &str) {
        self.ids.insert(token.to_string(), self.tokens.len());
        self.tokens.push(token.to_string());
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Lowercases and maps out-of-vocabulary words to UNK. The reserved
    /// PAD/UNK strings are never matched by input text.
    pub fn id(&self, word: &str) -> usize {
        let lower = word.to_lowercase();
        match self.ids.get(&lower) {
            Some(&id) if id > UNK_ID => id,
            _ => UNK_ID,
        }
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }
}
