use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use psa_core::corpus::{load_dataset, split, Dataset, Polarity};
use psa_core::embed::{load_embeddings, EmbeddingTable};
use psa_core::eval::{evaluate_indices, render_report, report_json, MetricsReport};
use psa_core::models::{
    build_cnn_with, build_mlp, load_model, predict, to_bytes, train, train_autoencoder_classifier,
    AutoencoderClassifierConfig, InputDescriptor, ModelKind, Samples, TrainObjective, TrainedModel,
};

use crate::config::{require_file, RunConfig};
use crate::encode::{encode_dataset, encode_texts, tokens};
use crate::error::CliError;

/// Flags shared by every subcommand; they override the config file.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Options {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let overrides = [
            (&self.model, &mut cfg.paths.model),
            (&self.dataset, &mut cfg.paths.dataset),
            (&self.embeddings, &mut cfg.paths.embeddings),
        ];
        for (flag, slot) in overrides {
            if let Some(p) = flag {
                *slot = Some(p.clone());
            }
        }
        Ok(cfg)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout
        .write_all(text.as_bytes())
        .and_then(|_| stdout.flush())
        .map_err(|e| CliError::data(format!("writing output: {e}")))
}

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(load_dataset(path)?.aggregate_all()?)
}

fn read_embeddings(path: &Path) -> Result<EmbeddingTable, CliError> {
    let table = load_embeddings(path)?;
    log::info!("loaded {} embeddings of dimension {}", table.len(), table.dim());
    Ok(table)
}

/// Builds and trains the configured model on already-encoded splits.
pub fn fit(cfg: &RunConfig, train_set: &Samples, valid: &Samples, dim: usize) -> Result<TrainedModel, CliError> {
    let m = &cfg.model;
    let model = match m.kind {
        ModelKind::Mlp => train(
            build_mlp(dim, &m.hidden, m.num_classes, cfg.seed)?,
            train_set,
            valid,
            &cfg.optimizer(),
            TrainObjective::Classification,
        )?,
        ModelKind::Cnn1d => train(
            build_cnn_with(cfg.max_len, dim, m.num_classes, &m.cnn, cfg.seed)?,
            train_set,
            valid,
            &cfg.optimizer(),
            TrainObjective::Classification,
        )?,
        ModelKind::AutoencoderClassifier => {
            let ac = AutoencoderClassifierConfig {
                shape: m.autoencoder_shape(),
                head_hidden: m.hidden.clone(),
                num_classes: m.num_classes,
                autoencoder_optimizer: cfg.autoencoder_optimizer(),
                classifier_optimizer: cfg.optimizer(),
            };
            train_autoencoder_classifier(train_set, valid, &ac, cfg.seed)?
        }
        ModelKind::Autoencoder => return Err(CliError::config("autoencoder is not a classifier")),
    };
    Ok(model)
}

pub fn input_descriptor(cfg: &RunConfig, dim: usize) -> InputDescriptor {
    if cfg.model.kind.input_is_sequence() {
        InputDescriptor::Sequence {
            max_len: cfg.max_len,
            dim,
        }
    } else {
        InputDescriptor::MeanVector { dim }
    }
}

fn evaluate_model(model: &TrainedModel, dataset: &Dataset, table: &EmbeddingTable) -> Result<MetricsReport, CliError> {
    let samples = encode_dataset(dataset, table, &model.spec.input)?;
    let inputs = samples
        .inputs()
        .ok_or_else(|| CliError::data(format!("{} has no reviews to evaluate", dataset.name)))?;
    let preds: Vec<usize> = predict(model, &inputs)?.iter().map(|p| p.label).collect();
    Ok(evaluate_indices(&preds, samples.labels())?)
}

fn report_outputs(
    model: &TrainedModel,
    report: MetricsReport,
    report_path: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let named = [(model.spec.kind.display_name().to_string(), report)];
    if let Some(path) = report_path {
        write_file(path, report_json(&named).as_bytes())?;
    }
    emit(stdout, &render_report(&named))
}

/// Default report location next to a model file.
fn sibling_report(model: &Path) -> PathBuf {
    model.with_extension("report.json")
}

pub fn cmd_train(opts: &Options, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = opts.resolve()?;
    if let Some(out) = &opts.out {
        cfg.paths.report = Some(out.clone());
    }
    cfg.validate()?;
    let dataset_path = require_file(cfg.paths.dataset.as_deref(), "dataset")?;
    let embeddings_path = require_file(cfg.paths.embeddings.as_deref(), "embeddings")?;
    let model_path = cfg
        .paths
        .model
        .clone()
        .ok_or_else(|| CliError::config("no model output path given"))?;
    let report_path = cfg.paths.report.clone().unwrap_or_else(|| sibling_report(&model_path));

    let dataset = read_dataset(&dataset_path)?;
    let table = read_embeddings(&embeddings_path)?;
    let parts = split(&dataset, &cfg.split_spec())?;
    log::info!(
        "split {} reviews into train {}, test {}, valid {}",
        dataset.len(),
        parts.train.len(),
        parts.test.len(),
        parts.valid.len()
    );
    let input = input_descriptor(&cfg, table.dim());
    let train_set = encode_dataset(&parts.train, &table, &input)?;
    let valid = encode_dataset(&parts.valid, &table, &input)?;

    let model = fit(&cfg, &train_set, &valid, table.dim())?;
    log::info!(
        "trained {} for {} epochs; kept epoch {:?}",
        model.spec.kind,
        model.history.len(),
        model.best_epoch
    );
    write_file(&model_path, &to_bytes(&model))?;

    let report = evaluate_model(&model, &parts.test, &table)?;
    report_outputs(&model, report, Some(&report_path), stdout)
}

pub fn cmd_evaluate(opts: &Options, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = opts.resolve()?;
    let model_path = require_file(cfg.paths.model.as_deref(), "model")?;
    let dataset_path = require_file(cfg.paths.dataset.as_deref(), "dataset")?;
    let embeddings_path = require_file(cfg.paths.embeddings.as_deref(), "embeddings")?;
    let model = load_model(&model_path)?;
    let dataset = read_dataset(&dataset_path)?;
    let table = read_embeddings(&embeddings_path)?;
    let report = evaluate_model(&model, &dataset, &table)?;
    let report_path = opts.out.clone().or(cfg.paths.report);
    report_outputs(&model, report, report_path.as_deref(), stdout)
}

/// Class name used in prediction output.
pub fn class_name(index: usize) -> String {
    match Polarity::from_index(index) {
        Some(p) => p.token().to_string(),
        None => format!("class{index}"),
    }
}

pub fn cmd_predict(
    opts: &Options,
    text: Option<&str>,
    input: Option<&Path>,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = opts.resolve()?;
    let model_path = require_file(cfg.paths.model.as_deref(), "model")?;
    let embeddings_path = require_file(cfg.paths.embeddings.as_deref(), "embeddings")?;
    let model = load_model(&model_path)?;
    let table = read_embeddings(&embeddings_path)?;

    let lines: Vec<String> = match (text, input) {
        (Some(t), _) => t.lines().map(str::to_string).collect::<Vec<_>>(),
        (None, Some(path)) => std::fs::read_to_string(path)
            .map_err(|e| io_error(path, e))?
            .lines()
            .map(str::to_string)
            .collect(),
        (None, None) => stdin
            .lines()
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::data(format!("reading standard input: {e}")))?,
    };
    let lines = if lines.is_empty() && text.is_some() { vec![String::new()] } else { lines };
    for (i, line) in lines.iter().enumerate() {
        if tokens(line).is_empty() {
            log::warn!("input line {} has no tokens; predicting from an empty encoding", i + 1);
        }
    }
    let Some(inputs) = encode_texts(&lines, &table, &model.spec.input)? else {
        return Ok(());
    };
    let mut out = String::new();
    for p in predict(&model, &inputs)? {
        out.push_str(&class_name(p.label));
        for v in &p.distribution {
            out.push('\t');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    emit(stdout, &out)
}

pub fn cmd_preprocess(opts: &Options, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = opts.resolve()?;
    let dataset_path = require_file(cfg.paths.dataset.as_deref(), "dataset")?;
    let dataset = load_dataset(&dataset_path)?;
    let mut dump = String::new();
    for review in &dataset.reviews {
        let toks = tokens(&review.text);
        if toks.is_empty() {
            log::warn!("review {} has no tokens after preprocessing", review.id);
        }
        dump.push_str(&review.id);
        dump.push('\t');
        dump.push_str(&toks.join(" "));
        dump.push('\n');
    }
    match &opts.out {
        Some(path) => write_file(path, dump.as_bytes()),
        None => emit(stdout, &dump),
    }
}

