//! Versioned model file: a single JSON object with every real number
//! written to 17 significant digits so that save → load → save is
//! byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use indexmap::IndexMap;
use serde::Deserialize;

use super::params::ClassifierParams;
use super::vocab::{Vocabulary, PAD_ID};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Deserialize)]
struct ModelFile {
    version: u32,
    labels: Vec<String>,
    vocab: IndexMap<String, usize>,
    dim: usize,
    embeddings: Vec<f64>,
    #[serde(rename = "W")]
    weights: Vec<f64>,
    #[serde(rename = "b")]
    bias: Vec<f64>,
}

fn write_numbers(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{v:.16e}").expect("writing to a String");
    }
    out.push(']');
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

pub fn model_to_string(params: &ClassifierParams) -> String {
    let mut out = String::new();
    write!(out, "{{\"version\":{MODEL_FORMAT_VERSION},\"labels\":[").unwrap();
    let labels: Vec<String> = params
        .vocabulary
        .labels()
        .iter()
        .map(|l| json_string(l))
        .collect();
    out.push_str(&labels.join(","));
    out.push_str("],\"vocab\":{");
    let entries: Vec<String> = params
        .vocabulary
        .tokens()
        .iter()
        .enumerate()
        .map(|(id, tok)| format!("{}:{id}", json_string(tok)))
        .collect();
    out.push_str(&entries.join(","));
    write!(out, "}},\"dim\":{},\"embeddings\":", params.dim).unwrap();
    write_numbers(&mut out, &params.embeddings);
    out.push_str(",\"W\":");
    write_numbers(&mut out, &params.weights);
    out.push_str(",\"b\":");
    write_numbers(&mut out, &params.bias);
    out.push_str("}\n");
    out
}

pub fn save_model<W: Write>(params: &ClassifierParams, mut sink: W) -> Result<()> {
    sink.write_all(model_to_string(params).as_bytes())?;
    sink.flush()?;
    Ok(())
}

pub fn load_model<R: Read>(mut source: R) -> Result<ClassifierParams> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    if file.version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported version {} (expected {MODEL_FORMAT_VERSION})",
            file.version
        )));
    }
    let by_id: BTreeMap<usize, String> = file.vocab.into_iter().map(|(t, id)| (id, t)).collect();
    let vocabulary = Vocabulary::from_parts(by_id, file.labels)?;
    let (v, c, d) = (vocabulary.len(), vocabulary.num_classes(), file.dim);
    if d == 0 {
        return Err(Error::ModelFormat("dim must be positive".into()));
    }
    for (name, len, want) in [
        ("embeddings", file.embeddings.len(), v * d),
        ("W", file.weights.len(), c * d),
        ("b", file.bias.len(), c),
    ] {
        if len != want {
            return Err(Error::ModelFormat(format!(
                "{name} has {len} values, expected {want}"
            )));
        }
    }
    let params = ClassifierParams {
        vocabulary,
        dim: d,
        embeddings: file.embeddings,
        weights: file.weights,
        bias: file.bias,
        max_len: crate::corpus::DEFAULT_MAX_LEN,
    };
    if !params.is_finite() {
        return Err(Error::ModelFormat("non-finite parameter".into()));
    }
    if params.embedding(PAD_ID).iter().any(|&x| x != 0.0) {
        return Err(Error::ModelFormat("PAD embedding row must be zero".into()));
    }
    Ok(params)
}
