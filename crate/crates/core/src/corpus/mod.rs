//! Corpus ingestion and record files.

mod conllu;
mod jsonl;
mod lexicon;
mod types;

pub use conllu::{parse_conllu, IngestReport, Ingested, Rejection, MULTI_INTENT_SEPARATOR};
pub use jsonl::{
    read_attributions, read_jsonl, write_attributions, write_jsonl, AttributionRecord, CorpusRead,
    Method,
};
pub use lexicon::{is_stopword, normalize_deprel, stopword_set};
pub use types::{
    AnnotatedUtterance, Dataset, ParsedUtterance, Record, Token, Upos, DEFAULT_MAX_LEN,
};
