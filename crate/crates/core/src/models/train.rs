use serde::{Deserialize, Serialize};

use super::{
    argmax, build_autoencoder, build_mlp, encode_bottleneck_batch, AutoencoderShape, InputDescriptor, ModelError,
    ModelKind, ModelSpec, TrainedModel,
};
use crate::nn::{optimizer_step, Network, NnError, Objective, OptimizerConfig, OptimizerState, Tensor};
use crate::rng::SeededRng;

/// Encoded inputs with optional class labels. Unlike [`Tensor`], a sample
/// set may be empty (an empty validation split, for instance).
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    sample_shape: Vec<usize>,
    data: Vec<f64>,
    labels: Vec<usize>,
}

impl Samples {
    /// `inputs` is `(n, sample...)`; `labels` is empty or has `n` entries.
    pub fn new(inputs: Tensor, labels: Vec<usize>) -> Result<Self, ModelError> {
        let n = inputs.shape()[0];
        if !labels.is_empty() && labels.len() != n {
            return Err(ModelError::EncodingMismatch(format!("{} labels for {n} inputs", labels.len())));
        }
        Ok(Self {
            sample_shape: inputs.shape()[1..].to_vec(),
            data: inputs.into_data(),
            labels,
        })
    }

    pub fn empty(sample_shape: &[usize]) -> Self {
        Self {
            sample_shape: sample_shape.to_vec(),
            data: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        let per: usize = self.sample_shape.iter().product();
        if per == 0 {
            0
        } else {
            self.data.len() / per
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn is_labeled(&self) -> bool {
        !self.labels.is_empty()
    }

    /// Every sample as one tensor, or `None` when empty.
    pub fn inputs(&self) -> Option<Tensor> {
        let mut shape = vec![self.len()];
        shape.extend(&self.sample_shape);
        Tensor::new(&shape, self.data.clone()).ok()
    }

    fn gather(&self, indices: &[usize]) -> Tensor {
        let per: usize = self.sample_shape.iter().product();
        let mut data = Vec::with_capacity(per * indices.len());
        for &i in indices {
            data.extend_from_slice(&self.data[i * per..(i + 1) * per]);
        }
        let mut shape = vec![indices.len()];
        shape.extend(&self.sample_shape);
        Tensor::new(&shape, data).expect("gathered shape")
    }

    fn gather_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainObjective {
    Classification,
    Reconstruction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean loss over the full train set after the epoch's updates.
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub valid_accuracy: Option<f64>,
}

const EVAL_CHUNK: usize = 256;

struct PassStats {
    loss: f64,
    accuracy: Option<f64>,
}

/// Mean loss (and accuracy when classifying) over a full sample set.
fn evaluate_pass(network: &Network, samples: &Samples, objective: TrainObjective) -> Result<PassStats, ModelError> {
    let n = samples.len();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let x = samples.gather(&idx);
        let out = network.forward(&x)?;
        if !out.is_finite() {
            return Ok(PassStats { loss: f64::NAN, accuracy: None });
        }
        let chunk_loss = match objective {
            TrainObjective::Classification => {
                let labels = samples.gather_labels(&idx);
                let k = out.shape()[1];
                correct += out
                    .data()
                    .chunks(k)
                    .zip(&labels)
                    .filter(|(row, &y)| argmax(row) == y)
                    .count();
                Objective::Classification(&labels).loss(&out)?
            }
            TrainObjective::Reconstruction => Objective::Reconstruction(&x).loss(&out)?,
        };
        loss += chunk_loss * idx.len() as f64;
    }
    Ok(PassStats {
        loss: loss / n as f64,
        accuracy: (objective == TrainObjective::Classification).then(|| correct as f64 / n as f64),
    })
}

fn check_samples(model: &TrainedModel, samples: &Samples, objective: TrainObjective, role: &str) -> Result<(), ModelError> {
    let expected = model.spec.input.sample_shape();
    if samples.sample_shape() != expected.as_slice() {
        return Err(ModelError::EncodingMismatch(format!(
            "{role} samples have shape {:?}, model expects {expected:?}",
            samples.sample_shape()
        )));
    }
    if objective == TrainObjective::Classification && !samples.is_empty() {
        let k = model.spec.num_classes.unwrap_or(0);
        if !samples.is_labeled() {
            return Err(ModelError::EncodingMismatch(format!("{role} samples carry no labels")));
        }
        if let Some(&bad) = samples.labels().iter().find(|&&y| y >= k) {
            return Err(ModelError::EncodingMismatch(format!("{role} label {bad} outside {k} classes")));
        }
    }
    Ok(())
}

/// Minibatch training. Every epoch reshuffles the train set from a stream
/// seeded by `config.seed`, steps the optimizer once per batch and then
/// records full-pass losses. The returned parameters are those of the epoch
/// with the lowest validation loss (train loss when `valid` is empty);
/// ties keep the earliest epoch.
pub fn train(
    mut model: TrainedModel,
    train_set: &Samples,
    valid: &Samples,
    config: &OptimizerConfig,
    objective: TrainObjective,
) -> Result<TrainedModel, ModelError> {
    config.validate()?;
    match objective {
        TrainObjective::Classification if !model.spec.kind.is_classifier() => {
            return Err(ModelError::WrongModelKind {
                expected: "classifier",
                found: model.spec.kind,
            })
        }
        TrainObjective::Reconstruction if model.spec.kind != ModelKind::Autoencoder => {
            return Err(ModelError::WrongModelKind {
                expected: "autoencoder",
                found: model.spec.kind,
            })
        }
        _ => {}
    }
    if train_set.is_empty() {
        return Err(ModelError::EncodingMismatch("empty training set".into()));
    }
    check_samples(&model, train_set, objective, "train")?;
    check_samples(&model, valid, objective, "validation")?;

    let n = train_set.len();
    let batch_size = config.batch_size.min(n);
    let mut rng = SeededRng::new(config.seed);
    let mut state = OptimizerState::new();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let network = &mut model.network;

    for epoch in 1..=config.epochs {
        let order = rng.permutation(n);
        for (b, idx) in order.chunks(batch_size).enumerate() {
            let x = train_set.gather(idx);
            if !network.forward_train(&x)?.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b + 1, loss: f64::NAN });
            }
            let (loss, grads) = match objective {
                TrainObjective::Classification => {
                    let labels = train_set.gather_labels(idx);
                    network.backward(&x, Objective::Classification(&labels))?
                }
                TrainObjective::Reconstruction => network.backward(&x, Objective::Reconstruction(&x))?,
            };
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b + 1, loss });
            }
            let mut params = network.parameters_mut();
            match optimizer_step(&mut params, &grads, config, &mut state) {
                Ok(()) => {}
                Err(NnError::NonFiniteGradient { .. }) => {
                    return Err(ModelError::NonFiniteLoss { epoch, batch: b + 1, loss: f64::NAN })
                }
                Err(e) => return Err(e.into()),
            }
        }

        let train_stats = evaluate_pass(network, train_set, objective)?;
        if !train_stats.loss.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                epoch,
                batch: 0,
                loss: train_stats.loss,
            });
        }
        let valid_stats = if valid.is_empty() {
            None
        } else {
            Some(evaluate_pass(network, valid, objective)?)
        };
        if let Some(s) = valid_stats.as_ref().filter(|s| !s.loss.is_finite()) {
            return Err(ModelError::NonFiniteLoss { epoch, batch: 0, loss: s.loss });
        }
        let record = EpochRecord {
            epoch,
            train_loss: train_stats.loss,
            valid_loss: valid_stats.as_ref().map(|s| s.loss),
            valid_accuracy: valid_stats.as_ref().and_then(|s| s.accuracy),
        };
        log::debug!(
            "epoch {epoch}: train loss {:.6}, valid loss {:?}, valid accuracy {:?}",
            record.train_loss,
            record.valid_loss,
            record.valid_accuracy
        );
        let score = record.valid_loss.unwrap_or(record.train_loss);
        if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
            best = Some((score, epoch, network.parameters().into_iter().cloned().collect()));
        }
        history.push(record);
    }

    let (_, best_epoch, params) = best.expect("at least one epoch");
    for (p, kept) in network.parameters_mut().into_iter().zip(params) {
        *p = kept;
    }
    model.history = history;
    model.best_epoch = Some(best_epoch);
    Ok(model)
}

/// Both stages of the autoencoder-bottleneck classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderClassifierConfig {
    pub shape: AutoencoderShape,
    pub head_hidden: Vec<usize>,
    pub num_classes: usize,
    pub autoencoder_optimizer: OptimizerConfig,
    pub classifier_optimizer: OptimizerConfig,
}

impl Default for AutoencoderClassifierConfig {
    fn default() -> Self {
        Self {
            shape: AutoencoderShape::reference(),
            head_hidden: vec![100],
            num_classes: 2,
            autoencoder_optimizer: OptimizerConfig::default(),
            classifier_optimizer: OptimizerConfig::default(),
        }
    }
}

/// Stage 1 trains the autoencoder on reconstruction; stage 2 trains an MLP
/// head on the frozen encoder's codes. The result is one composite model
/// whose first layers are the encoder.
pub fn train_autoencoder_classifier(
    train_set: &Samples,
    valid: &Samples,
    config: &AutoencoderClassifierConfig,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    let dim = match train_set.sample_shape() {
        [d] => *d,
        other => {
            return Err(ModelError::EncodingMismatch(format!(
                "autoencoder classifier takes mean vectors, got samples of shape {other:?}"
            )))
        }
    };
    let unlabeled = |s: &Samples| -> Result<Samples, ModelError> {
        Ok(match s.inputs() {
            Some(x) => Samples::new(x, Vec::new())?,
            None => Samples::empty(s.sample_shape()),
        })
    };
    let autoencoder = build_autoencoder(dim, &config.shape, seed)?;
    let autoencoder = train(
        autoencoder,
        &unlabeled(train_set)?,
        &unlabeled(valid)?,
        &config.autoencoder_optimizer,
        TrainObjective::Reconstruction,
    )?;

    let codes = |s: &Samples| -> Result<Samples, ModelError> {
        Ok(match s.inputs() {
            Some(x) => Samples::new(encode_bottleneck_batch(&autoencoder, &x)?, s.labels().to_vec())?,
            None => Samples::empty(&[config.shape.bottleneck()]),
        })
    };
    let head = build_mlp(config.shape.bottleneck(), &config.head_hidden, config.num_classes, seed)?;
    let head = train(
        head,
        &codes(train_set)?,
        &codes(valid)?,
        &config.classifier_optimizer,
        TrainObjective::Classification,
    )?;
    assemble_autoencoder_classifier(&autoencoder, &head)
}

/// Encoder layers of `autoencoder` followed by all layers of `head`.
pub fn assemble_autoencoder_classifier(
    autoencoder: &TrainedModel,
    head: &TrainedModel,
) -> Result<TrainedModel, ModelError> {
    if autoencoder.spec.kind != ModelKind::Autoencoder {
        return Err(ModelError::WrongModelKind {
            expected: "autoencoder",
            found: autoencoder.spec.kind,
        });
    }
    if head.spec.kind != ModelKind::Mlp {
        return Err(ModelError::WrongModelKind {
            expected: "mlp",
            found: head.spec.kind,
        });
    }
    let encoder_layers = autoencoder.spec.encoder_layers;
    let mut layers = autoencoder.network.layers()[..encoder_layers].to_vec();
    layers.extend_from_slice(head.network.layers());
    let network = Network::new(layers);
    let spec = ModelSpec {
        kind: ModelKind::AutoencoderClassifier,
        input: InputDescriptor::MeanVector {
            dim: autoencoder.spec.input.dim(),
        },
        layers: network.specs(),
        num_classes: head.spec.num_classes,
        encoder_layers,
    };
    let mut model = TrainedModel::new(spec, network, autoencoder.seed)?;
    model.history = head.history.clone();
    model.best_epoch = head.best_epoch;
    model.pretrain_history = autoencoder.history.clone();
    Ok(model)
}
