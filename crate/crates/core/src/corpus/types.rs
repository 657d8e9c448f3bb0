use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default maximum utterance length in tokens.
pub const DEFAULT_MAX_LEN: usize = 80;

/// Universal POS tags (UD v2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Upos {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

impl Upos {
    pub const ALL: [Upos; 17] = [
        Upos::Adj,
        Upos::Adp,
        Upos::Adv,
        Upos::Aux,
        Upos::Cconj,
        Upos::Det,
        Upos::Intj,
        Upos::Noun,
        Upos::Num,
        Upos::Part,
        Upos::Pron,
        Upos::Propn,
        Upos::Punct,
        Upos::Sconj,
        Upos::Sym,
        Upos::Verb,
        Upos::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Upos::Adj => "ADJ",
            Upos::Adp => "ADP",
            Upos::Adv => "ADV",
            Upos::Aux => "AUX",
            Upos::Cconj => "CCONJ",
            Upos::Det => "DET",
            Upos::Intj => "INTJ",
            Upos::Noun => "NOUN",
            Upos::Num => "NUM",
            Upos::Part => "PART",
            Upos::Pron => "PRON",
            Upos::Propn => "PROPN",
            Upos::Punct => "PUNCT",
            Upos::Sconj => "SCONJ",
            Upos::Sym => "SYM",
            Upos::Verb => "VERB",
            Upos::X => "X",
        }
    }
}

impl fmt::Display for Upos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Upos {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Upos::ALL
            .iter()
            .copied()
            .find(|u| u.as_str() == s)
            .ok_or_else(|| format!("unknown UPOS tag {s:?}"))
    }
}

impl TryFrom<String> for Upos {
    type Error = String;

    fn try_from(value: String) -> std::result::Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Upos> for String {
    fn from(u: Upos) -> String {
        u.as_str().to_string()
    }
}

/// One node of a dependency tree. `index` is 1-based; `head` 0 marks the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub index: usize,
    pub form: String,
    pub upos: Upos,
    pub head: usize,
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedUtterance {
    pub id: String,
    pub text: String,
    pub tokens: Vec<Token>,
    pub intent: String,
    pub slots: Option<Vec<String>>,
}

impl ParsedUtterance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.form.as_str())
    }

    /// 1-based index of the root token.
    pub fn root(&self) -> Option<usize> {
        self.tokens.iter().find(|t| t.head == 0).map(|t| t.index)
    }

    pub fn token(&self, index: usize) -> &Token {
        &self.tokens[index - 1]
    }

    /// 1-based indices of the dependents of `index`, in surface order.
    pub fn children(&self, index: usize) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(move |t| t.head == index)
    }

    pub fn validate(&self, max_len: usize) -> Result<()> {
        let invalid = |message: String| Error::InvalidRecord {
            id: self.id.clone(),
            message,
        };
        let m = self.tokens.len();
        if m == 0 {
            return Err(invalid("utterance has no tokens".into()));
        }
        if m > max_len {
            return Err(invalid(format!("{m} tokens exceeds maximum of {max_len}")));
        }
        if let Some(slots) = &self.slots {
            if slots.len() != m {
                return Err(invalid(format!("{} slot tags for {m} tokens", slots.len())));
            }
        }
        for (pos, t) in self.tokens.iter().enumerate() {
            if t.index != pos + 1 {
                return Err(invalid(format!(
                    "token at position {} has index {}",
                    pos + 1,
                    t.index
                )));
            }
            if t.head > m || t.head == t.index {
                return Err(invalid(format!(
                    "token {} has invalid head {}",
                    t.index, t.head
                )));
            }
        }
        check_tree(&self.tokens).map_err(invalid)
    }
}

/// Checks that heads form a single tree rooted at exactly one token.
pub(crate) fn check_tree(tokens: &[Token]) -> std::result::Result<(), String> {
    let roots = tokens.iter().filter(|t| t.head == 0).count();
    if roots != 1 {
        return Err(format!("expected exactly one root, found {roots}"));
    }
    let m = tokens.len();
    for t in tokens {
        let mut seen = HashSet::new();
        let mut cur = t.index;
        while cur != 0 {
            if !seen.insert(cur) {
                return Err(format!("cycle through token {}", t.index));
            }
            if cur > m {
                return Err(format!("head {cur} out of range"));
            }
            cur = tokens[cur - 1].head;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedUtterance {
    pub utterance: ParsedUtterance,
    pub mask: Vec<u8>,
}

impl AnnotatedUtterance {
    pub fn new(utterance: ParsedUtterance, mask: Vec<u8>) -> Result<Self> {
        let a = AnnotatedUtterance { utterance, mask };
        a.validate_mask()?;
        Ok(a)
    }

    pub fn validate_mask(&self) -> Result<()> {
        if self.mask.len() != self.utterance.len() {
            return Err(Error::InvalidRecord {
                id: self.utterance.id.clone(),
                message: format!(
                    "explanation mask has {} entries for {} tokens",
                    self.mask.len(),
                    self.utterance.len()
                ),
            });
        }
        if let Some(bad) = self.mask.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidRecord {
                id: self.utterance.id.clone(),
                message: format!("explanation mask value {bad} is not 0 or 1"),
            });
        }
        Ok(())
    }

    /// 0-based positions selected by the mask.
    pub fn rationale(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(i, _)| i)
            .collect()
    }
}

/// A corpus record; the mask is absent until annotation has run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub utterance: ParsedUtterance,
    pub mask: Option<Vec<u8>>,
}

impl From<ParsedUtterance> for Record {
    fn from(utterance: ParsedUtterance) -> Self {
        Record {
            utterance,
            mask: None,
        }
    }
}

impl From<AnnotatedUtterance> for Record {
    fn from(a: AnnotatedUtterance) -> Self {
        Record {
            utterance: a.utterance,
            mask: Some(a.mask),
        }
    }
}

impl Record {
    pub fn id(&self) -> &str {
        &self.utterance.id
    }

    pub fn annotated(&self) -> Option<AnnotatedUtterance> {
        self.mask.as_ref().map(|mask| AnnotatedUtterance {
            utterance: self.utterance.clone(),
            mask: mask.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub labels: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with the sorted distinct intent inventory.
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let mut ids = HashSet::new();
        for r in &records {
            if !ids.insert(r.id()) {
                return Err(Error::InvalidRecord {
                    id: r.id().to_string(),
                    message: "duplicate record id".into(),
                });
            }
        }
        let labels: BTreeSet<&str> = records
            .iter()
            .map(|r| r.utterance.intent.as_str())
            .collect();
        let labels = labels.into_iter().map(str::to_string).collect();
        Ok(Dataset { records, labels })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
