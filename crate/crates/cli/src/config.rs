//! TOML run configuration.
//!
//! Relative paths inside the file resolve against the file's directory.
//! The top-level `seed` drives the split, parameter initialization and
//! minibatch shuffling; any `seed` under `[optimizer]` is replaced by it.

use std::path::{Path, PathBuf};

use psa_core::corpus::SplitSpec;
use psa_core::embed::DEFAULT_MAX_LEN;
use psa_core::models::{AutoencoderShape, CnnShape, ModelKind};
use psa_core::nn::{Activation, OptimizerConfig};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub max_len: usize,
    pub paths: Paths,
    pub model: ModelSection,
    pub split: SplitSection,
    pub optimizer: OptimizerConfig,
    /// Stage-1 optimizer of the autoencoder classifier; defaults to
    /// `optimizer`.
    pub autoencoder_optimizer: Option<OptimizerConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_len: DEFAULT_MAX_LEN,
            paths: Paths::default(),
            model: ModelSection::default(),
            split: SplitSection::default(),
            optimizer: OptimizerConfig::default(),
            autoencoder_optimizer: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// MLP hidden widths; also the head of the autoencoder classifier.
    pub hidden: Vec<usize>,
    pub num_classes: usize,
    pub autoencoder_hidden: [usize; 3],
    pub autoencoder_activation: Activation,
    pub cnn: CnnShape,
}

impl Default for ModelSection {
    fn default() -> Self {
        let ae = AutoencoderShape::reference();
        Self {
            kind: ModelKind::Mlp,
            hidden: vec![100],
            num_classes: 2,
            autoencoder_hidden: ae.hidden,
            autoencoder_activation: ae.hidden_activation,
            cnn: CnnShape::reference(),
        }
    }
}

impl ModelSection {
    pub fn autoencoder_shape(&self) -> AutoencoderShape {
        AutoencoderShape {
            hidden: self.autoencoder_hidden,
            hidden_activation: self.autoencoder_activation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub test: f64,
    pub valid: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        let s = SplitSpec::default();
        Self {
            train: s.train_fraction,
            test: s.test_fraction,
            valid: s.valid_fraction,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {}", e.message())))
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("reading config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for p in [
            &mut cfg.paths.dataset,
            &mut cfg.paths.embeddings,
            &mut cfg.paths.model,
            &mut cfg.paths.report,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.split.train,
            test_fraction: self.split.test,
            valid_fraction: self.split.valid,
            seed: self.seed,
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            seed: self.seed,
            ..self.optimizer.clone()
        }
    }

    pub fn autoencoder_optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            seed: self.seed,
            ..self.autoencoder_optimizer.clone().unwrap_or_else(|| self.optimizer.clone())
        }
    }

    /// Checks numeric invariants; paths are checked by the commands that use
    /// them.
    pub fn validate(&self) -> Result<(), CliError> {
        self.split_spec().validate()?;
        self.optimizer().validate().map_err(|e| CliError::config(format!("optimizer: {e}")))?;
        self.autoencoder_optimizer()
            .validate()
            .map_err(|e| CliError::config(format!("autoencoder_optimizer: {e}")))?;
        let m = &self.model;
        if m.kind == ModelKind::Autoencoder {
            return Err(CliError::config(
                "model.kind autoencoder has no classifier; use autoencoder_classifier",
            ));
        }
        if m.num_classes < 2 {
            return Err(CliError::config(format!("model.num_classes must be at least 2, got {}", m.num_classes)));
        }
        if m.hidden.contains(&0) || m.autoencoder_hidden.contains(&0) || m.cnn.dense.contains(&0) {
            return Err(CliError::config("layer widths must be positive"));
        }
        if self.max_len == 0 {
            return Err(CliError::config("max_len must be at least 1"));
        }
        if m.kind == ModelKind::Cnn1d {
            m.cnn.length_chain(self.max_len)?;
        }
        Ok(())
    }
}

/// Fails with a config error unless `path` names an existing file.
pub fn require_file(path: Option<&Path>, what: &str) -> Result<PathBuf, CliError> {
    let path = path.ok_or_else(|| CliError::config(format!("no {what} path given")))?;
    if !path.is_file() {
        return Err(CliError::config(format!("{what} file {} does not exist", path.display())));
    }
    Ok(path.to_path_buf())
}
