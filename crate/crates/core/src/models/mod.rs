//! The three classifier architectures (MLP, autoencoder-bottleneck
//! classifier, 1D-CNN), their training loop, and the `PSAM/1` model file.

mod format;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{softmax_row, Activation, LayerSpec, Network, NnError, Tensor};

pub use format::{from_bytes, load_model, save_model, to_bytes, FormatError, MAGIC};
pub use train::{
    assemble_autoencoder_classifier, train, train_autoencoder_classifier, AutoencoderClassifierConfig,
    EpochRecord, Samples, TrainObjective,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error("max_len {max_len} is too short for the convolution stack; the minimum is {min_len}")]
    SequenceTooShort { max_len: usize, min_len: usize },
    #[error("input encoding mismatch: {0}")]
    EncodingMismatch(String),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("expected a {expected} model, found {found}")]
    WrongModelKind { expected: &'static str, found: ModelKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    /// Reconstruction-only autoencoder: the pretraining stage of
    /// [`ModelKind::AutoencoderClassifier`].
    Autoencoder,
    AutoencoderClassifier,
    Cnn1d,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Autoencoder => "autoencoder",
            ModelKind::AutoencoderClassifier => "autoencoder_classifier",
            ModelKind::Cnn1d => "cnn1d",
        }
    }

    /// Heading used in metric tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "MLP",
            ModelKind::Autoencoder => "Autoencoder",
            ModelKind::AutoencoderClassifier => "MLP-Autoencoder",
            ModelKind::Cnn1d => "1D-CNN",
        }
    }

    pub fn is_classifier(self) -> bool {
        self != ModelKind::Autoencoder
    }

    pub fn input_is_sequence(self) -> bool {
        self == ModelKind::Cnn1d
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "autoencoder" => Ok(ModelKind::Autoencoder),
            "autoencoder_classifier" => Ok(ModelKind::AutoencoderClassifier),
            "cnn1d" => Ok(ModelKind::Cnn1d),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

/// How a review reaches the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum InputDescriptor {
    MeanVector { dim: usize },
    Sequence { max_len: usize, dim: usize },
}

impl InputDescriptor {
    pub fn dim(&self) -> usize {
        match *self {
            InputDescriptor::MeanVector { dim } | InputDescriptor::Sequence { dim, .. } => dim,
        }
    }

    pub fn sample_shape(&self) -> Vec<usize> {
        match *self {
            InputDescriptor::MeanVector { dim } => vec![dim],
            InputDescriptor::Sequence { max_len, dim } => vec![max_len, dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input: InputDescriptor,
    pub layers: Vec<LayerSpec>,
    /// `None` for the reconstruction-only autoencoder.
    pub num_classes: Option<usize>,
    /// Leading layers that form the encoder (0 when there is none).
    pub encoder_layers: usize,
}

/// Architecture plus parameters and, once trained, the per-epoch history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub network: Network,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    /// Autoencoder stage history of a two-stage model.
    pub pretrain_history: Vec<EpochRecord>,
}

impl TrainedModel {
    pub fn new(spec: ModelSpec, network: Network, seed: u64) -> Result<Self, ModelError> {
        let model = Self {
            spec,
            network,
            seed,
            history: Vec::new(),
            best_epoch: None,
            pretrain_history: Vec::new(),
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks that parameters, layer list and input/output shapes agree.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.network.specs() != self.spec.layers {
            return Err(ModelError::BadDimension("network layers differ from spec".into()));
        }
        let out = self.network.output_shape(&self.spec.input.sample_shape())?;
        let expected = match self.spec.num_classes {
            Some(k) if self.spec.kind.is_classifier() => vec![k],
            None if !self.spec.kind.is_classifier() => vec![self.spec.input.dim()],
            _ => return Err(ModelError::BadDimension("num_classes does not match model kind".into())),
        };
        if out != expected {
            return Err(ModelError::BadDimension(format!("network output {out:?}, expected {expected:?}")));
        }
        if self.spec.encoder_layers > self.spec.layers.len() {
            return Err(ModelError::BadDimension("encoder longer than network".into()));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.spec.num_classes
    }

    /// Validation loss of the kept parameters.
    pub fn best_valid_loss(&self) -> Option<f64> {
        let epoch = self.best_epoch?;
        self.history.get(epoch - 1)?.valid_loss
    }

    pub(crate) fn check_inputs(&self, inputs: &Tensor) -> Result<(), ModelError> {
        let expected = self.spec.input.sample_shape();
        if inputs.rank() != expected.len() + 1 || inputs.shape()[1..] != expected[..] {
            return Err(ModelError::EncodingMismatch(format!(
                "model expects samples of shape {expected:?}, got batch {:?}",
                inputs.shape()
            )));
        }
        Ok(())
    }
}

fn bad_dim(msg: impl Into<String>) -> ModelError {
    ModelError::BadDimension(msg.into())
}

fn check_classes(num_classes: usize) -> Result<(), ModelError> {
    if num_classes < 2 {
        return Err(bad_dim(format!("num_classes must be at least 2, got {num_classes}")));
    }
    Ok(())
}

/// Dense relu stack over `hidden_sizes`, then a linear layer to
/// `num_classes` logits (softmax is applied at prediction and in the loss).
pub fn build_mlp(
    input_dim: usize,
    hidden_sizes: &[usize],
    num_classes: usize,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    if input_dim == 0 || hidden_sizes.contains(&0) {
        return Err(bad_dim("layer widths must be positive"));
    }
    check_classes(num_classes)?;
    let layers = dense_chain(input_dim, hidden_sizes, num_classes);
    let spec = ModelSpec {
        kind: ModelKind::Mlp,
        input: InputDescriptor::MeanVector { dim: input_dim },
        layers,
        num_classes: Some(num_classes),
        encoder_layers: 0,
    };
    let network = Network::from_specs(&spec.layers, seed)?;
    TrainedModel::new(spec, network, seed)
}

fn dense_chain(input: usize, hidden: &[usize], outputs: usize) -> Vec<LayerSpec> {
    let mut widths = vec![input];
    widths.extend_from_slice(hidden);
    widths.push(outputs);
    widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec::Dense {
            inputs: w[0],
            outputs: w[1],
            activation: if i + 2 == widths.len() { Activation::Linear } else { Activation::Relu },
        })
        .collect()
}

/// Hidden widths of the symmetric autoencoder `input → h0 → h1 → h2 → input`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoencoderShape {
    pub hidden: [usize; 3],
    pub hidden_activation: Activation,
}

impl AutoencoderShape {
    /// 1500 → 512 bottleneck → 1500.
    pub fn reference() -> Self {
        Self {
            hidden: [1500, 512, 1500],
            hidden_activation: Activation::Relu,
        }
    }

    /// The reference widths divided by `divisor` (at least 1 unit each);
    /// `scaled(100)` gives 15 → 5 → 15.
    pub fn scaled(divisor: usize) -> Self {
        let d = divisor.max(1);
        let [a, b, c] = Self::reference().hidden;
        Self {
            hidden: [(a / d).max(1), (b / d).max(1), (c / d).max(1)],
            ..Self::reference()
        }
    }

    pub fn bottleneck(&self) -> usize {
        self.hidden[1]
    }
}

impl Default for AutoencoderShape {
    fn default() -> Self {
        Self::reference()
    }
}

/// Number of leading autoencoder layers that make up the encoder.
pub const ENCODER_LAYERS: usize = 2;

pub fn build_autoencoder(input_dim: usize, shape: &AutoencoderShape, seed: u64) -> Result<TrainedModel, ModelError> {
    if input_dim == 0 || shape.hidden.contains(&0) {
        return Err(bad_dim("layer widths must be positive"));
    }
    let widths = [input_dim, shape.hidden[0], shape.hidden[1], shape.hidden[2], input_dim];
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec::Dense {
            inputs: w[0],
            outputs: w[1],
            activation: if i == 3 { Activation::Linear } else { shape.hidden_activation },
        })
        .collect();
    let spec = ModelSpec {
        kind: ModelKind::Autoencoder,
        input: InputDescriptor::MeanVector { dim: input_dim },
        layers,
        num_classes: None,
        encoder_layers: ENCODER_LAYERS,
    };
    let network = Network::from_specs(&spec.layers, seed)?;
    TrainedModel::new(spec, network, seed)
}

/// Convolution stack hyperparameters for [`build_cnn_with`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnShape {
    pub stages: usize,
    pub filter_width: usize,
    pub filters: usize,
    pub pool_window: usize,
    /// Hidden fully connected widths before the class layer.
    pub dense: Vec<usize>,
}

impl CnnShape {
    /// Four conv(2, 15 maps) + pool(2) stages, then dense 5000 and 500.
    pub fn reference() -> Self {
        Self {
            stages: 4,
            filter_width: 2,
            filters: 15,
            pool_window: 2,
            dense: vec![5000, 500],
        }
    }

    /// Sequence lengths after each conv and each pool, in order.
    pub fn length_chain(&self, max_len: usize) -> Result<Vec<usize>, ModelError> {
        let too_short = || ModelError::SequenceTooShort {
            max_len,
            min_len: self.min_len(),
        };
        let mut chain = Vec::with_capacity(self.stages * 2);
        let mut len = max_len;
        for _ in 0..self.stages {
            if len < self.filter_width {
                return Err(too_short());
            }
            len = len - self.filter_width + 1;
            chain.push(len);
            if len < self.pool_window {
                return Err(too_short());
            }
            len /= self.pool_window;
            chain.push(len);
        }
        Ok(chain)
    }

    /// Smallest `max_len` that survives every stage.
    pub fn min_len(&self) -> usize {
        let mut len = 1;
        for _ in 0..self.stages {
            len = len * self.pool_window + self.filter_width - 1;
        }
        len
    }

    /// Flattened feature count after the last pool.
    pub fn flatten_size(&self, max_len: usize) -> Result<usize, ModelError> {
        let chain = self.length_chain(max_len)?;
        Ok(chain.last().copied().unwrap_or(max_len) * if self.stages == 0 { 1 } else { self.filters })
    }
}

impl Default for CnnShape {
    fn default() -> Self {
        Self::reference()
    }
}

pub fn build_cnn(max_len: usize, dim: usize, num_classes: usize, seed: u64) -> Result<TrainedModel, ModelError> {
    build_cnn_with(max_len, dim, num_classes, &CnnShape::reference(), seed)
}

pub fn build_cnn_with(
    max_len: usize,
    dim: usize,
    num_classes: usize,
    shape: &CnnShape,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    if dim == 0 || max_len == 0 || shape.filters == 0 || shape.filter_width == 0 || shape.pool_window == 0 {
        return Err(bad_dim("cnn dimensions must be positive"));
    }
    if shape.dense.contains(&0) {
        return Err(bad_dim("dense widths must be positive"));
    }
    check_classes(num_classes)?;
    let flat = shape.flatten_size(max_len)?;

    let mut layers = Vec::new();
    let mut channels = dim;
    for _ in 0..shape.stages {
        layers.push(LayerSpec::Conv1d {
            width: shape.filter_width,
            in_channels: channels,
            filters: shape.filters,
            activation: Activation::Relu,
        });
        layers.push(LayerSpec::MaxPool1d { window: shape.pool_window });
        channels = shape.filters;
    }
    layers.push(LayerSpec::Flatten);
    layers.extend(dense_chain(flat, &shape.dense, num_classes));

    let spec = ModelSpec {
        kind: ModelKind::Cnn1d,
        input: InputDescriptor::Sequence { max_len, dim },
        layers,
        num_classes: Some(num_classes),
        encoder_layers: 0,
    };
    let network = Network::from_specs(&spec.layers, seed)?;
    TrainedModel::new(spec, network, seed)
}

/// Weighted and pooling layers, i.e. everything except flatten.
pub fn counted_layers(spec: &ModelSpec) -> usize {
    spec.layers.iter().filter(|l| !matches!(l, LayerSpec::Flatten)).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Class index; ties go to the lower index.
    pub label: usize,
    pub distribution: Vec<f64>,
}

const PREDICT_CHUNK: usize = 256;

/// Softmax class distributions for a batch of encoded inputs, in order.
pub fn predict(model: &TrainedModel, inputs: &Tensor) -> Result<Vec<Prediction>, ModelError> {
    let k = match model.spec.num_classes {
        Some(k) if model.spec.kind.is_classifier() => k,
        _ => {
            return Err(ModelError::WrongModelKind {
                expected: "classifier",
                found: model.spec.kind,
            })
        }
    };
    model.check_inputs(inputs)?;
    let n = inputs.shape()[0];
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(PREDICT_CHUNK) {
        let chunk = inputs.rows(start, (start + PREDICT_CHUNK).min(n));
        let logits = model.network.forward(&chunk)?;
        for row in logits.data().chunks(k) {
            let mut distribution = row.to_vec();
            softmax_row(&mut distribution);
            out.push(Prediction {
                label: argmax(&distribution),
                distribution,
            });
        }
    }
    Ok(out)
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Bottleneck codes of a batch of inputs through the encoder half of a
/// trained autoencoder.
pub fn encode_bottleneck_batch(model: &TrainedModel, inputs: &Tensor) -> Result<Tensor, ModelError> {
    if model.spec.kind != ModelKind::Autoencoder {
        return Err(ModelError::WrongModelKind {
            expected: "autoencoder",
            found: model.spec.kind,
        });
    }
    model.check_inputs(inputs)?;
    Ok(model.network.forward_range(inputs, 0..model.spec.encoder_layers)?)
}

pub fn encode_bottleneck(model: &TrainedModel, input: &[f64]) -> Result<Vec<f64>, ModelError> {
    let batch = Tensor::new(&[1, input.len()], input.to_vec())?;
    Ok(encode_bottleneck_batch(model, &batch)?.into_data())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shapes(model: &TrainedModel) -> Vec<Vec<usize>> {
        model.network.parameters().iter().map(|t| t.shape().to_vec()).collect()
    }

    #[test]
    fn mlp_parameter_shapes() {
        let m = build_mlp(300, &[100], 2, 1).unwrap();
        assert_eq!(shapes(&m), vec![vec![300, 100], vec![100], vec![100, 2], vec![2]]);
        let lr = build_mlp(300, &[], 2, 1).unwrap();
        assert_eq!(shapes(&lr), vec![vec![300, 2], vec![2]]);
        assert_eq!(build_mlp(300, &[100], 2, 9).unwrap(), build_mlp(300, &[100], 2, 9).unwrap());
    }

    #[test]
    fn mlp_bad_dimensions() {
        assert!(matches!(build_mlp(0, &[4], 2, 0), Err(ModelError::BadDimension(_))));
        assert!(matches!(build_mlp(3, &[4], 1, 0), Err(ModelError::BadDimension(_))));
        assert!(matches!(build_mlp(3, &[0], 2, 0), Err(ModelError::BadDimension(_))));
    }

    #[test]
    fn autoencoder_widths() {
        let m = build_autoencoder(300, &AutoencoderShape::reference(), 0).unwrap();
        let widths: Vec<usize> = m
            .spec
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Dense { outputs, .. } => *outputs,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(widths, vec![1500, 512, 1500, 300]);
        let code = encode_bottleneck(&m, &[0.1; 300]).unwrap();
        assert_eq!(code.len(), 512);

        let small = build_autoencoder(3, &AutoencoderShape::scaled(100), 0).unwrap();
        assert_eq!(
            shapes(&small),
            vec![vec![3, 15], vec![15], vec![15, 5], vec![5], vec![5, 15], vec![15], vec![15, 3], vec![3]]
        );
        assert!(matches!(build_autoencoder(0, &AutoencoderShape::reference(), 0), Err(ModelError::BadDimension(_))));
    }

    #[test]
    fn linear_encoder_maps_zero_to_zero() {
        let shape = AutoencoderShape { hidden_activation: Activation::Linear, ..AutoencoderShape::scaled(100) };
        let m = build_autoencoder(3, &shape, 4).unwrap();
        assert_eq!(encode_bottleneck(&m, &[0.0; 3]).unwrap(), vec![0.0; 5]);
        let a = encode_bottleneck(&m, &[0.3, -0.2, 0.9]).unwrap();
        assert_eq!(a, encode_bottleneck(&m, &[0.3, -0.2, 0.9]).unwrap());
    }

    #[test]
    fn bottleneck_needs_autoencoder() {
        let m = build_mlp(3, &[4], 2, 0).unwrap();
        assert!(matches!(encode_bottleneck(&m, &[0.0; 3]), Err(ModelError::WrongModelKind { .. })));
        let ae = build_autoencoder(3, &AutoencoderShape::scaled(100), 0).unwrap();
        assert!(matches!(encode_bottleneck(&ae, &[0.0; 4]), Err(ModelError::EncodingMismatch(_))));
        assert!(matches!(
            predict(&ae, &Tensor::zeros(&[1, 3])),
            Err(ModelError::WrongModelKind { .. })
        ));
    }

    #[test]
    fn cnn_reference_preset() {
        let shape = CnnShape::reference();
        assert_eq!(shape.length_chain(100).unwrap(), vec![99, 49, 48, 24, 23, 11, 10, 5]);
        assert_eq!(shape.flatten_size(100).unwrap(), 75);
        assert_eq!(shape.min_len(), 31);
        assert!(shape.length_chain(31).is_ok());
        assert!(shape.length_chain(30).is_err());

        let m = build_cnn(100, 300, 2, 0).unwrap();
        assert_eq!(counted_layers(&m.spec), 11);
        let dense_out: Vec<usize> = m
            .spec
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dense { outputs, .. } => Some(*outputs),
                _ => None,
            })
            .collect();
        assert_eq!(dense_out, vec![5000, 500, 2]);
        let four = build_cnn(100, 300, 4, 0).unwrap();
        assert_eq!(four.spec.num_classes, Some(4));
    }

    #[test]
    fn cnn_too_short() {
        assert!(matches!(
            build_cnn(16, 300, 2, 0),
            Err(ModelError::SequenceTooShort { max_len: 16, min_len: 31 })
        ));
    }

    #[test]
    fn predict_ties_and_order() {
        assert_eq!(argmax(&[0.9, 0.1]), 0);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.8]), 1);

        // Zero weights give equal logits and therefore a 0.5/0.5 tie.
        let mut m = build_mlp(2, &[], 2, 0).unwrap();
        for p in m.network.parameters_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let preds = predict(&m, &Tensor::new(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()).unwrap();
        assert_eq!(preds.len(), 3);
        for p in preds {
            assert_eq!(p.label, 0);
            assert_eq!(p.distribution, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn predict_checks_encoding() {
        let m = build_mlp(3, &[4], 2, 0).unwrap();
        assert!(matches!(predict(&m, &Tensor::zeros(&[2, 4])), Err(ModelError::EncodingMismatch(_))));
        let c = build_cnn(31, 2, 2, 0).unwrap();
        assert!(matches!(predict(&c, &Tensor::zeros(&[1, 30, 2])), Err(ModelError::EncodingMismatch(_))));
        assert_eq!(predict(&c, &Tensor::zeros(&[2, 31, 2])).unwrap().len(), 2);
    }
}
