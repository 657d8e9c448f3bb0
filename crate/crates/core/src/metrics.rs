//! Plausibility, faithfulness, classification and agreement metrics.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default rationale budget for plausibility and faithfulness.
pub const DEFAULT_TOP_K: usize = 5;
/// A predicted span matches a gold span when their IOU exceeds this.
pub const IOU_MATCH_THRESHOLD: f64 = 0.5;

/// A set of 0-based token positions within an utterance of length `len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rationale {
    len: usize,
    indices: BTreeSet<usize>,
}

impl Rationale {
    pub fn new<I: IntoIterator<Item = usize>>(len: usize, indices: I) -> Result<Self> {
        let indices: BTreeSet<usize> = indices.into_iter().collect();
        if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: bad + 1,
            });
        }
        Ok(Rationale { len, indices })
    }

    pub fn from_mask(mask: &[u8]) -> Self {
        Rationale {
            len: mask.len(),
            indices: mask
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1)
                .map(|(i, _)| i)
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn utterance_len(&self) -> usize {
        self.len
    }

    pub fn indices(&self) -> &BTreeSet<usize> {
        &self.indices
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }

    /// Maximal runs of consecutive positions as inclusive `(start, end)` pairs.
    pub fn spans(&self) -> Vec<(usize, usize)> {
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for &i in &self.indices {
            match spans.last_mut() {
                Some((_, end)) if *end + 1 == i => *end = i,
                _ => spans.push((i, i)),
            }
        }
        spans
    }

    /// Tokens inside the rationale, in original order.
    pub fn select<T: Clone>(&self, tokens: &[T]) -> Vec<T> {
        self.indices.iter().map(|&i| tokens[i].clone()).collect()
    }

    /// Tokens outside the rationale, in original order.
    pub fn remove_from<T: Clone>(&self, tokens: &[T]) -> Vec<T> {
        tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.indices.contains(i))
            .map(|(_, t)| t.clone())
            .collect()
    }
}

/// Positions of the `min(k, m)` largest attributions; earlier positions win ties.
pub fn topk_rationale(attributions: &[f64], k: usize) -> Rationale {
    let mut order: Vec<usize> = (0..attributions.len()).collect();
    order.sort_by(|&a, &b| {
        attributions[b]
            .partial_cmp(&attributions[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    Rationale {
        len: attributions.len(),
        indices: order.into_iter().take(k).collect(),
    }
}

fn f1_from_counts(overlap_p: usize, pred: usize, overlap_r: usize, gold: usize) -> f64 {
    match (pred, gold) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => {
            let p = overlap_p as f64 / pred as f64;
            let r = overlap_r as f64 / gold as f64;
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        }
    }
}

fn check_aligned(pred: &Rationale, gold: &Rationale) -> Result<()> {
    if pred.len != gold.len {
        return Err(Error::LengthMismatch {
            expected: gold.len,
            actual: pred.len,
        });
    }
    Ok(())
}

/// Token-level F1 between two rationales of the same utterance.
pub fn token_f1(pred: &Rationale, gold: &Rationale) -> Result<f64> {
    check_aligned(pred, gold)?;
    let overlap = pred.indices.intersection(&gold.indices).count();
    Ok(f1_from_counts(overlap, pred.len(), overlap, gold.len()))
}

fn iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    let inter = if hi >= lo { hi - lo + 1 } else { 0 };
    let union = (a.1 - a.0 + 1) + (b.1 - b.0 + 1) - inter;
    inter as f64 / union as f64
}

/// Span match counts, summed over a corpus before the F1 is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct IouCounts {
    pub predicted_spans: usize,
    pub predicted_hits: usize,
    pub gold_spans: usize,
    pub gold_matched: usize,
}

impl IouCounts {
    pub fn add(&mut self, pred: &Rationale, gold: &Rationale) -> Result<()> {
        check_aligned(pred, gold)?;
        let ps = pred.spans();
        let gs = gold.spans();
        let mut matched = vec![false; gs.len()];
        for &p in &ps {
            let mut hit = false;
            for (gi, &g) in gs.iter().enumerate() {
                if iou(p, g) > IOU_MATCH_THRESHOLD {
                    hit = true;
                    matched[gi] = true;
                }
            }
            if hit {
                self.predicted_hits += 1;
            }
        }
        self.predicted_spans += ps.len();
        self.gold_spans += gs.len();
        self.gold_matched += matched.iter().filter(|&&m| m).count();
        Ok(())
    }

    pub fn f1(&self) -> f64 {
        f1_from_counts(
            self.predicted_hits,
            self.predicted_spans,
            self.gold_matched,
            self.gold_spans,
        )
    }
}

/// IOU F1 of a single instance.
pub fn iou_f1(pred: &Rationale, gold: &Rationale) -> Result<f64> {
    let mut counts = IouCounts::default();
    counts.add(pred, gold)?;
    Ok(counts.f1())
}

/// `p_full(j) − p_rationale_only(j)`.
pub fn sufficiency<T, F>(
    mut predict_fn: F,
    tokens: &[T],
    rationale: &Rationale,
    class: usize,
) -> Result<f64>
where
    T: Clone,
    F: FnMut(&[T]) -> Result<Vec<f64>>,
{
    let full = class_prob(&predict_fn(tokens)?, class)?;
    let kept = class_prob(&predict_fn(&rationale.select(tokens))?, class)?;
    Ok(full - kept)
}

/// `p_full(j) − p_without_rationale(j)`.
pub fn comprehensiveness<T, F>(
    mut predict_fn: F,
    tokens: &[T],
    rationale: &Rationale,
    class: usize,
) -> Result<f64>
where
    T: Clone,
    F: FnMut(&[T]) -> Result<Vec<f64>>,
{
    let full = class_prob(&predict_fn(tokens)?, class)?;
    let rest = class_prob(&predict_fn(&rationale.remove_from(tokens))?, class)?;
    Ok(full - rest)
}

fn class_prob(probs: &[f64], class: usize) -> Result<f64> {
    probs.get(class).copied().ok_or(Error::ClassOutOfRange {
        index: class,
        classes: probs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub per_class: IndexMap<String, ClassScores>,
}

pub fn classification_report<S: AsRef<str>>(
    predicted: &[S],
    gold: &[S],
    labels: &[String],
) -> Result<ClassificationReport> {
    if predicted.len() != gold.len() {
        return Err(Error::LengthMismatch {
            expected: gold.len(),
            actual: predicted.len(),
        });
    }
    let index = |l: &str| -> Result<usize> {
        labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| Error::UnknownLabel(l.to_string()))
    };
    let c = labels.len();
    let (mut tp, mut pred_count, mut support) = (vec![0usize; c], vec![0usize; c], vec![0usize; c]);
    let mut correct = 0;
    for (p, g) in predicted.iter().zip(gold) {
        let (pi, gi) = (index(p.as_ref())?, index(g.as_ref())?);
        pred_count[pi] += 1;
        support[gi] += 1;
        if pi == gi {
            tp[pi] += 1;
            correct += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class = labels
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let precision = ratio(tp[j], pred_count[j]);
            let recall = ratio(tp[j], support[j]);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            (
                l.clone(),
                ClassScores {
                    precision,
                    recall,
                    f1,
                    support: support[j],
                },
            )
        })
        .collect();
    Ok(ClassificationReport {
        accuracy: ratio(correct, gold.len()),
        per_class,
    })
}

/// Items × categories rating counts with a fixed number of raters per item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgreementTable {
    counts: Vec<Vec<usize>>,
    raters: usize,
}

impl AgreementTable {
    pub fn new(counts: Vec<Vec<usize>>) -> Result<Self> {
        let first = counts
            .first()
            .ok_or_else(|| Error::Config("agreement table has no items".into()))?;
        let categories = first.len();
        let raters: usize = first.iter().sum();
        for (i, row) in counts.iter().enumerate() {
            if row.len() != categories {
                return Err(Error::LengthMismatch {
                    expected: categories,
                    actual: row.len(),
                });
            }
            let total: usize = row.iter().sum();
            if total != raters {
                return Err(Error::Config(format!(
                    "item {} has {total} ratings, expected {raters}",
                    i + 1
                )));
            }
        }
        if raters < 2 {
            return Err(Error::Config(format!(
                "need at least 2 raters per item, found {raters}"
            )));
        }
        Ok(AgreementTable { counts, raters })
    }

    /// Builds the count table from per-item rater labels; categories are the
    /// distinct labels in sorted order.
    pub fn from_ratings<S: AsRef<str>>(rows: &[Vec<S>]) -> Result<Self> {
        let categories: BTreeMap<&str, usize> = rows
            .iter()
            .flatten()
            .map(AsRef::as_ref)
            .collect::<BTreeSet<&str>>()
            .into_iter()
            .enumerate()
            .map(|(i, c)| (c, i))
            .collect();
        let counts = rows
            .iter()
            .map(|row| {
                let mut counts = vec![0; categories.len()];
                for label in row {
                    counts[categories[label.as_ref()]] += 1;
                }
                counts
            })
            .collect();
        Self::new(counts)
    }

    pub fn items(&self) -> usize {
        self.counts.len()
    }

    pub fn raters(&self) -> usize {
        self.raters
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappa {
    pub kappa: f64,
    pub observed: f64,
    pub expected: f64,
    pub items: usize,
    pub raters: usize,
}

pub fn fleiss_kappa(table: &AgreementTable) -> Result<Kappa> {
    let n = table.raters as f64;
    let items = table.items() as f64;
    let categories = table.counts[0].len();
    let observed = table
        .counts
        .iter()
        .map(|row| {
            let sq: usize = row.iter().map(|&c| c * c).sum();
            (sq as f64 - n) / (n * (n - 1.0))
        })
        .sum::<f64>()
        / items;
    let expected: f64 = (0..categories)
        .map(|j| {
            let total: usize = table.counts.iter().map(|r| r[j]).sum();
            let p = total as f64 / (items * n);
            p * p
        })
        .sum();
    let kappa = if observed == 1.0 {
        1.0
    } else if expected == 1.0 {
        return Err(Error::Undefined(
            "kappa undefined: chance agreement is 1 but observed agreement is not".into(),
        ));
    } else {
        (observed - expected) / (1.0 - expected)
    };
    Ok(Kappa {
        kappa,
        observed,
        expected,
        items: table.items(),
        raters: table.raters,
    })
}

/// Corpus-level evaluation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub token_f1: f64,
    pub iou_f1: f64,
    pub comprehensiveness: f64,
    pub sufficiency: f64,
    pub per_class: IndexMap<String, ClassScores>,
    pub counts: IndexMap<String, usize>,
    pub config: IndexMap<String, serde_json::Value>,
}
