//! Line-delimited JSON records for annotated corpora and attribution outputs.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::conllu::Rejection;
use super::types::{check_tree, Dataset, ParsedUtterance, Record, Token, Upos, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorpusLine {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    tokens: Vec<String>,
    upos: Vec<Upos>,
    head: Vec<usize>,
    deprel: Vec<String>,
    intent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    explanation_mask: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slots: Option<Vec<String>>,
}

impl From<&Record> for CorpusLine {
    fn from(r: &Record) -> Self {
        let u = &r.utterance;
        CorpusLine {
            id: u.id.clone(),
            text: Some(u.text.clone()),
            tokens: u.tokens.iter().map(|t| t.form.clone()).collect(),
            upos: u.tokens.iter().map(|t| t.upos).collect(),
            head: u.tokens.iter().map(|t| t.head).collect(),
            deprel: u.tokens.iter().map(|t| t.deprel.clone()).collect(),
            intent: u.intent.clone(),
            explanation_mask: r.mask.clone(),
            slots: u.slots.clone(),
        }
    }
}

impl CorpusLine {
    fn into_record(self) -> std::result::Result<Record, String> {
        let m = self.tokens.len();
        for (name, len) in [
            ("upos", self.upos.len()),
            ("head", self.head.len()),
            ("deprel", self.deprel.len()),
        ] {
            if len != m {
                return Err(format!("{name} has {len} entries for {m} tokens"));
            }
        }
        if let Some(mask) = &self.explanation_mask {
            if mask.len() != m {
                return Err(format!(
                    "explanation_mask has {} entries for {m} tokens",
                    mask.len()
                ));
            }
            if mask.iter().any(|&v| v > 1) {
                return Err("explanation_mask values must be 0 or 1".into());
            }
        }
        let text = self.text.unwrap_or_else(|| self.tokens.join(" "));
        let tokens: Vec<Token> = self
            .tokens
            .into_iter()
            .zip(self.upos)
            .zip(self.head)
            .zip(self.deprel)
            .enumerate()
            .map(|(i, (((form, upos), head), deprel))| Token {
                index: i + 1,
                form,
                upos,
                head,
                deprel,
            })
            .collect();
        if tokens.iter().any(|t| t.head > m) {
            return Err("head index out of range".into());
        }
        let utterance = ParsedUtterance {
            id: self.id,
            text,
            tokens,
            intent: self.intent,
            slots: self.slots,
        };
        utterance
            .validate(DEFAULT_MAX_LEN.max(m))
            .map_err(|e| match e {
                Error::InvalidRecord { message, .. } => message,
                other => other.to_string(),
            })?;
        debug_assert!(check_tree(&utterance.tokens).is_ok());
        Ok(Record {
            utterance,
            mask: self.explanation_mask,
        })
    }
}

pub fn write_jsonl<W: Write>(dataset: &Dataset, mut sink: W) -> Result<()> {
    for r in &dataset.records {
        serde_json::to_writer(&mut sink, &CorpusLine::from(r))?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

#[derive(Debug)]
pub struct CorpusRead {
    pub dataset: Dataset,
    pub rejected: Vec<Rejection>,
}

/// Reads a corpus file. Unparseable lines are fatal; lines that parse but
/// violate a record invariant are rejected and reported.
pub fn read_jsonl<R: BufRead>(stream: R) -> Result<CorpusRead> {
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (i, line) in stream.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let id = parsed.id.clone();
        match parsed.into_record() {
            Ok(r) => records.push(r),
            Err(reason) => rejected.push(Rejection {
                id,
                line: lineno,
                reason,
            }),
        }
    }
    Ok(CorpusRead {
        dataset: Dataset::new(records)?,
        rejected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ig,
    Lime,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ig => "ig",
            Method::Lime => "lime",
        })
    }
}

/// One line of an attribution file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub id: String,
    pub method: Method,
    pub predicted_class: String,
    pub probabilities: Vec<f64>,
    pub attributions: Vec<f64>,
}

pub fn write_attributions<W: Write>(records: &[AttributionRecord], mut sink: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut sink, r)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_attributions<R: BufRead>(stream: R) -> Result<Vec<AttributionRecord>> {
    let mut out = Vec::new();
    for (i, line) in stream.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
