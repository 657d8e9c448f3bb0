//! Command-line front end. `run` parses arguments, executes one subcommand
//! and returns the process exit code: 0 on success, 1 on an internal
//! failure, 2 on bad user input.

use std::collections::{HashMap, HashSet};
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use serde_json::json;

use crate::annotator::annotate;
use crate::corpus::{
    parse_conllu, read_attributions, read_jsonl, write_attributions, write_jsonl,
    AttributionRecord, Dataset, Method, Record, DEFAULT_MAX_LEN,
};
use crate::error::Error;
use crate::lime::{instance_seed, lime_explain, LimeConfig};
use crate::metrics::{
    classification_report, comprehensiveness, fleiss_kappa, sufficiency, token_f1, topk_rationale,
    AgreementTable, IouCounts, MetricsReport, Rationale, DEFAULT_TOP_K,
};
use crate::model::{
    explain, load_model, save_model, train, ClassifierParams, TrainConfig, DEFAULT_DIM,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "intent-explain",
    version,
    about = "Explanation annotation and evaluation for intent classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ig,
    Lime,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ig => Method::Ig,
            MethodArg::Lime => Method::Lime,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Annotate a CoNLL-U corpus with dependency-based explanation masks.
    Annotate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Per-utterance traversal trace (JSONL).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
        max_len: usize,
    },
    /// Train the classifier with the attribution-prior joint loss.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.001)]
        learning_rate: f64,
        #[arg(long, default_value_t = 50)]
        ig_steps: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
        max_len: usize,
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
    },
    /// Write per-token attributions for every corpus record.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 50)]
        ig_steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        lime_samples: usize,
        #[arg(long, default_value_t = 25.0)]
        kernel_width: f64,
        #[arg(long, default_value_t = 1.0)]
        ridge_alpha: f64,
    },
    /// Score attributions for plausibility and faithfulness.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        attributions: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Fleiss' kappa over a ratings TSV (one row per item, one column per rater).
    Kappa {
        #[arg(long)]
        ratings: PathBuf,
    },
}

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_)
            | Error::Parse { .. }
            | Error::InvalidRecord { .. }
            | Error::UnknownLabel(_)
            | Error::LengthMismatch { .. }
            | Error::Config(_)
            | Error::ModelFormat(_)
            | Error::Undefined(_)
            | Error::Json(_) => EXIT_USAGE,
            Error::TokenOutOfRange { .. }
            | Error::ClassOutOfRange { .. }
            | Error::Singular
            | Error::Predict { .. } => EXIT_INTERNAL,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first) and runs the subcommand, writing the
/// summary to stdout and diagnostics to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Annotate {
            input,
            output,
            trace,
            max_len,
        } => cmd_annotate(&input, &output, trace.as_deref(), max_len, out, err),
        Command::Train {
            corpus,
            model,
            lambda,
            epochs,
            seed,
            batch_size,
            learning_rate,
            ig_steps,
            max_len,
            dim,
        } => {
            let config = TrainConfig {
                lambda,
                epochs,
                batch_size,
                learning_rate,
                ig_steps,
                seed,
                max_len,
                dim,
            };
            cmd_train(&corpus, &model, &config, out, err)
        }
        Command::Explain {
            model,
            corpus,
            method,
            output,
            ig_steps,
            seed,
            lime_samples,
            kernel_width,
            ridge_alpha,
        } => {
            let lime = LimeConfig {
                num_samples: lime_samples,
                kernel_width,
                ridge_alpha,
                seed,
            };
            cmd_explain(
                &model,
                &corpus,
                method.into(),
                &output,
                ig_steps,
                &lime,
                out,
                err,
            )
        }
        Command::Evaluate {
            model,
            corpus,
            attributions,
            k,
            output,
        } => cmd_evaluate(&model, &corpus, &attributions, k, &output, out, err),
        Command::Kappa { ratings } => cmd_kappa(&ratings, out),
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, key: &str, value: impl std::fmt::Display) -> CliResult<()> {
    writeln!(out, "{key}={value}").map_err(|e| CliError {
        code: EXIT_INTERNAL,
        message: e.to_string(),
    })
}

fn load_corpus(path: &Path, err: &mut dyn Write) -> CliResult<(Dataset, usize)> {
    let read = read_jsonl(open(path)?)?;
    for r in &read.rejected {
        let _ = writeln!(err, "rejected id={} line={}: {}", r.id, r.line, r.reason);
    }
    Ok((read.dataset, read.rejected.len()))
}

fn load_params(path: &Path) -> CliResult<ClassifierParams> {
    load_model(open(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn check_labels(params: &ClassifierParams, dataset: &Dataset) -> CliResult<()> {
    let unknown: Vec<&str> = dataset
        .labels
        .iter()
        .filter(|l| params.vocabulary.label_index(l).is_none())
        .map(String::as_str)
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "corpus labels not known to the model: {}",
            unknown.join(", ")
        )))
    }
}

fn cmd_annotate(
    input: &Path,
    output: &Path,
    trace: Option<&Path>,
    max_len: usize,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    if max_len == 0 {
        return Err(CliError::usage("--max-len must be positive"));
    }
    let ingested = parse_conllu(open(input)?, max_len)?;
    let report = ingested.report;
    for r in &report.rejected {
        let _ = writeln!(err, "rejected id={} line={}: {}", r.id, r.line, r.reason);
    }
    for id in &report.multi_intent_dropped {
        let _ = writeln!(err, "dropped multi-intent id={id}");
    }

    let mut records = Vec::with_capacity(ingested.dataset.len());
    let mut traces = Vec::with_capacity(ingested.dataset.len());
    let mut all_zero = 0;
    for record in ingested.dataset.records {
        let (annotated, t) = annotate(&record.utterance);
        if t.all_zero {
            all_zero += 1;
        }
        traces.push(t);
        records.push(Record::from(annotated));
    }
    let dataset = Dataset::new(records)?;

    let mut sink = create(output)?;
    write_jsonl(&dataset, &mut sink)?;
    if let Some(path) = trace {
        let mut sink = create(path)?;
        for t in &traces {
            serde_json::to_writer(&mut sink, t).map_err(Error::from)?;
            sink.write_all(b"\n").map_err(Error::from)?;
        }
        sink.flush().map_err(Error::from)?;
    }

    emit(out, "sentences", report.sentences)?;
    emit(out, "records", dataset.len())?;
    emit(
        out,
        "multi_intent_dropped",
        report.multi_intent_dropped.len(),
    )?;
    emit(out, "truncated", report.truncated.len())?;
    emit(out, "rejected", report.rejected.len())?;
    emit(out, "all_zero_masks", all_zero)?;
    Ok(())
}

fn cmd_train(
    corpus: &Path,
    model: &Path,
    config: &TrainConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let (dataset, rejected) = load_corpus(corpus, err)?;
    let (params, history) = train(&dataset, config)?;
    let mut sink = create(model)?;
    save_model(&params, &mut sink)?;

    emit(out, "records", dataset.len())?;
    emit(out, "rejected", rejected)?;
    emit(out, "classes", params.num_classes())?;
    emit(out, "vocab_size", params.vocab_size())?;
    emit(out, "epochs", history.len())?;
    emit(out, "lambda", config.lambda)?;
    if let Some(last) = history.last() {
        emit(out, "ce", last.ce)?;
        emit(out, "prior", last.prior)?;
        emit(out, "joint", last.joint)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_explain(
    model: &Path,
    corpus: &Path,
    method: Method,
    output: &Path,
    ig_steps: usize,
    lime: &LimeConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    if ig_steps == 0 {
        return Err(CliError::usage("--ig-steps must be at least 1"));
    }
    lime.validate()?;
    let params = load_params(model)?;
    let (dataset, rejected) = load_corpus(corpus, err)?;
    check_labels(&params, &dataset)?;
    let labels = params.vocabulary.labels();

    let mut results = Vec::with_capacity(dataset.len());
    for record in &dataset.records {
        let forms: Vec<&str> = record.utterance.forms().collect();
        let ids = params.vocabulary.encode(&forms);
        let (predicted, probabilities, attributions) = match method {
            Method::Ig => {
                let map = explain(&params, record.id(), &ids, ig_steps)?;
                (map.predicted_class, map.probabilities, map.attributions)
            }
            Method::Lime => {
                let config = LimeConfig {
                    seed: instance_seed(lime.seed, record.id()),
                    ..lime.clone()
                };
                let e = lime_explain(|kept: &[usize]| params.forward(kept), &ids, None, &config)?;
                (e.predicted_class, e.probabilities, e.attributions)
            }
        };
        results.push(AttributionRecord {
            id: record.id().to_string(),
            method,
            predicted_class: labels[predicted].clone(),
            probabilities,
            attributions,
        });
    }
    let mut sink = create(output)?;
    write_attributions(&results, &mut sink)?;

    emit(out, "records", results.len())?;
    emit(out, "rejected", rejected)?;
    emit(out, "method", method)?;
    Ok(())
}

fn cmd_evaluate(
    model: &Path,
    corpus: &Path,
    attributions: &Path,
    k: usize,
    output: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    if k == 0 {
        return Err(CliError::usage("--k must be at least 1"));
    }
    let params = load_params(model)?;
    let (dataset, rejected) = load_corpus(corpus, err)?;
    check_labels(&params, &dataset)?;
    let attrs = read_attributions(open(attributions)?)?;

    let corpus_ids: HashSet<&str> = dataset.records.iter().map(Record::id).collect();
    let mut by_id: HashMap<&str, &AttributionRecord> = HashMap::new();
    for a in &attrs {
        if by_id.insert(a.id.as_str(), a).is_some() {
            return Err(CliError::usage(format!(
                "duplicate attribution for id {}",
                a.id
            )));
        }
    }
    let missing: Vec<&str> = dataset
        .records
        .iter()
        .map(Record::id)
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::usage(format!(
            "missing attributions for ids: {}",
            missing.join(", ")
        )));
    }
    let extra: Vec<&str> = attrs
        .iter()
        .map(|a| a.id.as_str())
        .filter(|id| !corpus_ids.contains(id))
        .collect();
    if !extra.is_empty() {
        return Err(CliError::usage(format!(
            "attributions for ids not in the corpus: {}",
            extra.join(", ")
        )));
    }

    let labels = params.vocabulary.labels();
    let mut predicted = Vec::with_capacity(dataset.len());
    let mut gold = Vec::with_capacity(dataset.len());
    let (mut f1_sum, mut suff_sum, mut comp_sum) = (0.0, 0.0, 0.0);
    let mut iou = IouCounts::default();
    let mut methods: Vec<String> = Vec::new();

    for record in &dataset.records {
        let id = record.id();
        let a = by_id[id];
        let forms: Vec<&str> = record.utterance.forms().collect();
        if a.attributions.len() != forms.len() {
            return Err(CliError::usage(format!(
                "record {id}: {} attributions for {} tokens",
                a.attributions.len(),
                forms.len()
            )));
        }
        let mask = record
            .mask
            .as_ref()
            .ok_or_else(|| CliError::usage(format!("record {id}: no gold explanation mask")))?;
        if !methods.contains(&a.method.to_string()) {
            methods.push(a.method.to_string());
        }

        let ids = params.vocabulary.encode(&forms);
        let probs = params.forward(&ids)?;
        let class = crate::model::argmax(&probs);
        predicted.push(labels[class].as_str());
        gold.push(record.utterance.intent.as_str());

        let pred_rationale = topk_rationale(&a.attributions, k);
        let gold_rationale = Rationale::from_mask(mask);
        f1_sum += token_f1(&pred_rationale, &gold_rationale)?;
        iou.add(&pred_rationale, &gold_rationale)?;
        let predict = |kept: &[usize]| params.forward(kept);
        suff_sum += sufficiency(predict, &ids, &pred_rationale, class)?;
        comp_sum += comprehensiveness(predict, &ids, &pred_rationale, class)?;
    }

    let n = dataset.len().max(1) as f64;
    let classes = classification_report(&predicted, &gold, labels)?;
    let mut counts = IndexMap::new();
    counts.insert("records".to_string(), dataset.len());
    counts.insert("rejected".to_string(), rejected);
    counts.insert("predicted_spans".to_string(), iou.predicted_spans);
    counts.insert("predicted_span_hits".to_string(), iou.predicted_hits);
    counts.insert("gold_spans".to_string(), iou.gold_spans);
    counts.insert("gold_spans_matched".to_string(), iou.gold_matched);
    let mut config = IndexMap::new();
    config.insert("k".to_string(), json!(k));
    config.insert("method".to_string(), json!(methods.join(",")));
    config.insert("model".to_string(), json!(model.display().to_string()));
    config.insert("corpus".to_string(), json!(corpus.display().to_string()));
    config.insert(
        "attributions".to_string(),
        json!(attributions.display().to_string()),
    );
    let report = MetricsReport {
        accuracy: classes.accuracy,
        token_f1: f1_sum / n,
        iou_f1: iou.f1(),
        comprehensiveness: comp_sum / n,
        sufficiency: suff_sum / n,
        per_class: classes.per_class,
        counts,
        config,
    };

    let mut sink = create(output)?;
    serde_json::to_writer_pretty(&mut sink, &report).map_err(Error::from)?;
    sink.write_all(b"\n").map_err(Error::from)?;
    sink.flush().map_err(Error::from)?;

    emit(out, "records", dataset.len())?;
    emit(out, "accuracy", report.accuracy)?;
    emit(out, "token_f1", report.token_f1)?;
    emit(out, "iou_f1", report.iou_f1)?;
    emit(out, "comprehensiveness", report.comprehensiveness)?;
    emit(out, "sufficiency", report.sufficiency)?;
    for (label, s) in &report.per_class {
        writeln!(
            out,
            "class={label} precision={} recall={} f1={} support={}",
            s.precision, s.recall, s.f1, s.support
        )
        .map_err(Error::from)?;
    }
    Ok(())
}

/// Reads a ratings TSV: one line per item, one tab-separated label per rater.
/// Blank lines are skipped.
pub fn read_ratings<R: BufRead>(reader: R) -> crate::Result<Vec<Vec<String>>> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<String> = line.split('\t').map(|s| s.trim().to_string()).collect();
        if row.iter().any(String::is_empty) {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty rating".into(),
            });
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("{} ratings, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn cmd_kappa(ratings: &Path, out: &mut dyn Write) -> CliResult<()> {
    let rows = read_ratings(open(ratings)?)?;
    let table = AgreementTable::from_ratings(&rows)?;
    let k = fleiss_kappa(&table)?;
    emit(out, "kappa", k.kappa)?;
    emit(out, "p_bar", k.observed)?;
    emit(out, "p_bar_e", k.expected)?;
    emit(out, "items", k.items)?;
    emit(out, "raters", k.raters)?;
    Ok(())
}
