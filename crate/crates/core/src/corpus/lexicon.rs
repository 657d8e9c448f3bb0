//! Dependency-label normalization and the English stopword list.

use std::collections::HashSet;
use std::sync::OnceLock;

static STOPWORDS_EN: &str = include_str!("../../data/stopwords_en.txt");

/// Stanford basic-dependency names that differ from their universal counterpart.
const STANFORD_TO_UNIVERSAL: &[(&str, &str)] = &[
    ("dobj", "obj"),
    ("nsubjpass", "nsubj"),
    ("csubjpass", "csubj"),
    ("auxpass", "aux"),
    ("nn", "compound"),
    ("prt", "compound"),
    ("poss", "nmod"),
];

/// Maps a dependency label onto the canonical universal relation: lowercase,
/// drop any `:subtype`, then rename the Stanford-only labels.
pub fn normalize_deprel(label: &str) -> String {
    let lower = label.trim().to_lowercase();
    let base = lower.split(':').next().unwrap_or_default();
    STANFORD_TO_UNIVERSAL
        .iter()
        .find(|(from, _)| *from == base)
        .map(|(_, to)| (*to).to_string())
        .unwrap_or_else(|| base.to_string())
}

/// The vendored 179-word English stopword list.
pub fn stopword_set() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_EN
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .collect()
    })
}

/// Case-insensitive stopword membership.
pub fn is_stopword(word: &str) -> bool {
    !word.is_empty() && stopword_set().contains(word.to_lowercase().as_str())
}
