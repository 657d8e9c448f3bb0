//! Silver explanation masks from dependency trees.
//!
//! The main predicate (the root) is always marked. Level 1 adds root
//! dependents attached as `obj` or `xcomp`, and `nsubj`/`obl` dependents
//! whose POS is NOUN. Level 2 adds `compound` dependents of level-1 nodes
//! unless they are proper nouns. Stopwords are removed last.

use serde::Serialize;

use crate::corpus::{is_stopword, AnnotatedUtterance, ParsedUtterance, Upos};

/// Why a level-1 dependent was admitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level1Rule {
    Obj,
    Xcomp,
    Nsubj,
    Obl,
}

impl Level1Rule {
    fn for_dependent(deprel: &str, upos: Upos) -> Option<Self> {
        match deprel {
            "obj" => Some(Level1Rule::Obj),
            "xcomp" => Some(Level1Rule::Xcomp),
            "nsubj" if upos == Upos::Noun => Some(Level1Rule::Nsubj),
            "obl" if upos == Upos::Noun => Some(Level1Rule::Obl),
            _ => None,
        }
    }
}

/// Intermediate state of one annotation; all indices are 1-based token indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraversalTrace {
    pub id: String,
    pub root_index: usize,
    pub level1: Vec<(usize, Level1Rule)>,
    /// `nsubj`/`obl` dependents of the root left out because they are not NOUN.
    pub pos_filtered: Vec<(usize, String)>,
    pub compounds: Vec<usize>,
    pub removed_stopwords: Vec<usize>,
    pub all_zero: bool,
}

pub fn main_predicate(utterance: &ParsedUtterance) -> usize {
    utterance
        .root()
        .expect("validated utterance has exactly one root")
}

pub fn level1_arguments(utterance: &ParsedUtterance, root: usize) -> Vec<(usize, Level1Rule)> {
    utterance
        .children(root)
        .filter_map(|t| Level1Rule::for_dependent(&t.deprel, t.upos).map(|r| (t.index, r)))
        .collect()
}

pub fn compound_expansion(utterance: &ParsedUtterance, level1: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = level1
        .iter()
        .flat_map(|&parent| utterance.children(parent))
        .filter(|t| t.deprel == "compound" && t.upos != Upos::Propn)
        .map(|t| t.index)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub fn annotate(utterance: &ParsedUtterance) -> (AnnotatedUtterance, TraversalTrace) {
    let root = main_predicate(utterance);
    let level1 = level1_arguments(utterance, root);
    let pos_filtered = utterance
        .children(root)
        .filter(|t| matches!(t.deprel.as_str(), "nsubj" | "obl") && t.upos != Upos::Noun)
        .map(|t| (t.index, t.deprel.clone()))
        .collect();
    let level1_idx: Vec<usize> = level1.iter().map(|&(i, _)| i).collect();
    let compounds = compound_expansion(utterance, &level1_idx);

    let mut marked: Vec<usize> = std::iter::once(root)
        .chain(level1_idx.iter().copied())
        .chain(compounds.iter().copied())
        .collect();
    marked.sort_unstable();
    marked.dedup();

    let (removed_stopwords, kept): (Vec<usize>, Vec<usize>) = marked
        .into_iter()
        .partition(|&i| is_stopword(&utterance.token(i).form));

    let mut mask = vec![0u8; utterance.len()];
    for i in &kept {
        mask[i - 1] = 1;
    }
    let trace = TraversalTrace {
        id: utterance.id.clone(),
        root_index: root,
        level1,
        pos_filtered,
        compounds,
        removed_stopwords,
        all_zero: kept.is_empty(),
    };
    let annotated = AnnotatedUtterance {
        utterance: utterance.clone(),
        mask,
    };
    (annotated, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;

    /// (form, upos, head, deprel)
    fn parse(id: &str, rows: &[(&str, &str, usize, &str)]) -> ParsedUtterance {
        let tokens = rows
            .iter()
            .enumerate()
            .map(|(i, (form, upos, head, deprel))| Token {
                index: i + 1,
                form: form.to_string(),
                upos: upos.parse().unwrap(),
                head: *head,
                deprel: deprel.to_string(),
            })
            .collect();
        let u = ParsedUtterance {
            id: id.into(),
            text: rows.iter().map(|r| r.0).collect::<Vec<_>>().join(" "),
            tokens,
            intent: "x".into(),
            slots: None,
        };
        u.validate(80).unwrap();
        u
    }

    fn selected(u: &ParsedUtterance) -> Vec<String> {
        let (a, _) = annotate(u);
        a.rationale()
            .into_iter()
            .map(|i| u.tokens[i].form.clone())
            .collect()
    }

    fn book_table() -> ParsedUtterance {
        parse(
            "book",
            &[
                ("Book", "VERB", 0, "root"),
                ("a", "DET", 3, "det"),
                ("table", "NOUN", 1, "obj"),
                ("at", "ADP", 7, "case"),
                ("the", "DET", 7, "det"),
                ("top-rated", "ADJ", 7, "amod"),
                ("pub", "NOUN", 1, "obl"),
                ("in", "ADP", 9, "case"),
                ("Garner", "PROPN", 7, "nmod"),
            ],
        )
    }

    #[test]
    fn verbless_root_is_main_predicate() {
        let u = parse(
            "gt",
            &[
                ("Ground", "NOUN", 2, "compound"),
                ("Transportation", "NOUN", 0, "root"),
                ("at", "ADP", 5, "case"),
                ("Baltimore", "PROPN", 5, "compound"),
                ("airport", "NOUN", 2, "nmod"),
            ],
        );
        assert_eq!(main_predicate(&u), 2);
    }

    #[test]
    fn verbal_root() {
        let u = parse(
            "del",
            &[
                ("delete", "VERB", 0, "root"),
                ("all", "DET", 4, "det"),
                ("the", "DET", 4, "det"),
                ("alarms", "NOUN", 1, "obj"),
            ],
        );
        assert_eq!(main_predicate(&u), 1);
        assert_eq!(selected(&u), ["delete", "alarms"]);
    }

    #[test]
    fn single_token() {
        let u = parse("h", &[("help", "VERB", 0, "root")]);
        assert_eq!(main_predicate(&u), 1);
        assert_eq!(level1_arguments(&u, 1), vec![]);
        assert_eq!(selected(&u), ["help"]);
    }

    #[test]
    fn level1_obj_and_noun_obl() {
        let u = book_table();
        assert_eq!(
            level1_arguments(&u, 1),
            vec![(3, Level1Rule::Obj), (7, Level1Rule::Obl)]
        );
        assert_eq!(selected(&u), ["Book", "table", "pub"]);
    }

    #[test]
    fn xcomp_admitted_pronoun_subject_not() {
        let u = parse(
            "fly",
            &[
                ("I", "PRON", 2, "nsubj"),
                ("need", "VERB", 0, "root"),
                ("to", "PART", 4, "mark"),
                ("fly", "VERB", 2, "xcomp"),
                ("from", "ADP", 6, "case"),
                ("Atlanta", "PROPN", 4, "obl"),
                ("to", "ADP", 8, "case"),
                ("Denver", "PROPN", 4, "obl"),
            ],
        );
        assert_eq!(level1_arguments(&u, 2), vec![(4, Level1Rule::Xcomp)]);
        let (_, trace) = annotate(&u);
        assert_eq!(trace.pos_filtered, vec![(1, "nsubj".to_string())]);
        assert_eq!(selected(&u), ["need", "fly"]);
    }

    #[test]
    fn proper_noun_obl_dropped_even_when_single() {
        let u = parse(
            "f",
            &[
                ("fly", "VERB", 0, "root"),
                ("to", "ADP", 3, "case"),
                ("Denver", "PROPN", 1, "obl"),
            ],
        );
        assert_eq!(level1_arguments(&u, 1), vec![]);
    }

    #[test]
    fn propn_compound_excluded() {
        let u = parse(
            "united",
            &[
                ("show", "VERB", 0, "root"),
                ("me", "PRON", 1, "iobj"),
                ("United", "PROPN", 4, "compound"),
                ("flights", "NOUN", 1, "obj"),
            ],
        );
        assert_eq!(compound_expansion(&u, &[4]), Vec::<usize>::new());
        assert_eq!(selected(&u), ["show", "flights"]);
    }

    #[test]
    fn empty_level1_has_no_compounds() {
        let u = book_table();
        assert!(compound_expansion(&u, &[]).is_empty());
    }

    #[test]
    fn all_stopwords_gives_zero_mask() {
        let u = parse("sw", &[("do", "VERB", 0, "root"), ("it", "PRON", 1, "obj")]);
        let (a, trace) = annotate(&u);
        assert_eq!(a.mask, vec![0, 0]);
        assert!(trace.all_zero);
        assert_eq!(trace.removed_stopwords, vec![1, 2]);
    }

    #[test]
    fn deterministic() {
        let u = book_table();
        assert_eq!(annotate(&u), annotate(&u));
    }
}
