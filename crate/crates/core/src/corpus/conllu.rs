//! CoNLL-U ingestion.
//!
//! Sentence blocks are separated by blank lines. Each block carries
//! `# text = ...` and `# intent = ...` metadata and optionally
//! `# sent_id = ...` and `# slots = ...` (space-separated BIO tags).

use std::collections::HashSet;
use std::io::BufRead;

use super::lexicon::normalize_deprel;
use super::types::{check_tree, Dataset, ParsedUtterance, Record, Token, Upos};
use crate::error::{Error, Result};

/// Separator between intents in multi-intent labels (`atis_flight#atis_airfare`).
pub const MULTI_INTENT_SEPARATOR: char = '#';

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub id: String,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub sentences: usize,
    pub multi_intent_dropped: Vec<String>,
    pub truncated: Vec<String>,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug)]
pub struct Ingested {
    pub dataset: Dataset,
    pub report: IngestReport,
}

#[derive(Default)]
struct Block {
    start_line: usize,
    sent_id: Option<String>,
    text: Option<String>,
    intent: Option<String>,
    slots: Option<Vec<String>>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Block {
    fn is_empty(&self) -> bool {
        self.rows.is_empty()
            && self.sent_id.is_none()
            && self.text.is_none()
            && self.intent.is_none()
            && self.slots.is_none()
    }
}

/// Reads every sentence block, returning the valid utterances and an
/// account of what was dropped, truncated or rejected.
///
/// A data line without exactly ten tab-separated columns aborts the whole
/// read with its line number; every other defect rejects just its block.
pub fn parse_conllu<R: BufRead>(reader: R, max_len: usize) -> Result<Ingested> {
    let mut report = IngestReport::default();
    let mut utterances = Vec::new();
    let mut block = Block::default();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !block.is_empty() {
                finish_block(
                    std::mem::take(&mut block),
                    max_len,
                    &mut report,
                    &mut utterances,
                );
            }
            continue;
        }
        if block.is_empty() {
            block.start_line = lineno;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                let value = value.trim().to_string();
                match key.trim() {
                    "sent_id" => block.sent_id = Some(value),
                    "text" => block.text = Some(value),
                    "intent" => block.intent = Some(value),
                    "slots" => {
                        block.slots = Some(value.split_whitespace().map(str::to_string).collect())
                    }
                    _ => {}
                }
            }
            continue;
        }
        let cols: Vec<String> = line.split('\t').map(str::to_string).collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        block.rows.push((lineno, cols));
    }
    if !block.is_empty() {
        finish_block(block, max_len, &mut report, &mut utterances);
    }

    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(utterances.len());
    for (line, u) in utterances {
        if seen.insert(u.id.clone()) {
            records.push(Record::from(u));
        } else {
            report.rejected.push(Rejection {
                id: u.id,
                line,
                reason: "duplicate sentence id".into(),
            });
        }
    }
    let dataset = Dataset::new(records)?;
    Ok(Ingested { dataset, report })
}

fn finish_block(
    block: Block,
    max_len: usize,
    report: &mut IngestReport,
    out: &mut Vec<(usize, ParsedUtterance)>,
) {
    report.sentences += 1;
    let line = block.start_line;
    let id = block
        .sent_id
        .clone()
        .unwrap_or_else(|| format!("s{}", report.sentences));
    let reject = |report: &mut IngestReport, reason: String| {
        report.rejected.push(Rejection {
            id: id.clone(),
            line,
            reason,
        })
    };

    let Some(intent) = block.intent.clone() else {
        reject(report, "missing `# intent` metadata".into());
        return;
    };
    if intent.contains(MULTI_INTENT_SEPARATOR) {
        report.multi_intent_dropped.push(id);
        return;
    }
    if intent.is_empty() {
        reject(report, "empty intent".into());
        return;
    }

    let tokens = match parse_tokens(&block.rows) {
        Ok(t) => t,
        Err(reason) => {
            reject(report, reason);
            return;
        }
    };
    if tokens.is_empty() {
        reject(report, "sentence has no tokens".into());
        return;
    }
    if let Err(reason) = check_tree(&tokens) {
        reject(report, reason);
        return;
    }
    if let Some(slots) = &block.slots {
        if slots.len() != tokens.len() {
            reject(
                report,
                format!("{} slot tags for {} tokens", slots.len(), tokens.len()),
            );
            return;
        }
    }

    let text = block.text.clone().unwrap_or_else(|| {
        tokens
            .iter()
            .map(|t| t.form.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    });
    let mut utterance = ParsedUtterance {
        id: id.clone(),
        text,
        tokens,
        intent,
        slots: block.slots,
    };
    if utterance.tokens.len() > max_len {
        truncate(&mut utterance, max_len);
        report.truncated.push(id);
    }
    debug_assert!(utterance.validate(max_len).is_ok());
    out.push((line, utterance));
}

fn parse_tokens(rows: &[(usize, Vec<String>)]) -> std::result::Result<Vec<Token>, String> {
    let mut tokens = Vec::with_capacity(rows.len());
    for (lineno, cols) in rows {
        let id = cols[0].as_str();
        if id.contains('-') {
            return Err(format!(
                "line {lineno}: multiword token range {id} not supported"
            ));
        }
        if id.contains('.') {
            return Err(format!("line {lineno}: empty node {id} not supported"));
        }
        let index: usize = id
            .parse()
            .map_err(|_| format!("line {lineno}: bad token id {id:?}"))?;
        if index != tokens.len() + 1 {
            return Err(format!(
                "line {lineno}: token id {index}, expected {}",
                tokens.len() + 1
            ));
        }
        let upos: Upos = cols[3]
            .parse()
            .map_err(|e: String| format!("line {lineno}: {e}"))?;
        let head: usize = cols[6]
            .parse()
            .map_err(|_| format!("line {lineno}: bad head {:?}", cols[6]))?;
        if head == index {
            return Err(format!("line {lineno}: token {index} is its own head"));
        }
        if cols[7].is_empty() || cols[7] == "_" {
            return Err(format!("line {lineno}: missing dependency relation"));
        }
        tokens.push(Token {
            index,
            form: cols[1].clone(),
            upos,
            head,
            deprel: normalize_deprel(&cols[7]),
        });
    }
    Ok(tokens)
}

/// Keeps the first `max_len` tokens and repairs the tree: a kept token whose
/// head was cut is reattached to its nearest kept ancestor. When the root
/// itself was cut, the first such orphan becomes the new root and the other
/// orphans attach to it as `dep`.
fn truncate(u: &mut ParsedUtterance, max_len: usize) {
    let original: Vec<usize> = u.tokens.iter().map(|t| t.head).collect();
    let nearest_kept_ancestor = |mut idx: usize| -> Option<usize> {
        loop {
            let head = original[idx - 1];
            if head == 0 {
                return None;
            }
            if head <= max_len {
                return Some(head);
            }
            idx = head;
        }
    };

    u.tokens.truncate(max_len);
    if let Some(slots) = &mut u.slots {
        slots.truncate(max_len);
    }
    let mut new_root: Option<usize> = u.tokens.iter().find(|t| t.head == 0).map(|t| t.index);
    for t in u.tokens.iter_mut() {
        if t.head <= max_len {
            continue;
        }
        match nearest_kept_ancestor(t.index) {
            Some(anc) => t.head = anc,
            None => match new_root {
                None => {
                    t.head = 0;
                    t.deprel = "root".into();
                    new_root = Some(t.index);
                }
                Some(r) => {
                    t.head = r;
                    t.deprel = "dep".into();
                }
            },
        }
    }
}
