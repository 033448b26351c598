use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::layers::{Activation, Conv1DLayer, DenseLayer, MaxPool1DLayer};
use super::loss::{mse_grad, softmax_cross_entropy_grad};
use super::{NnError, Tensor};
use crate::rng::SeededRng;

/// Structural description of one layer, without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    Conv1d {
        width: usize,
        in_channels: usize,
        filters: usize,
        activation: Activation,
    },
    MaxPool1d {
        window: usize,
    },
    Flatten,
}

impl LayerSpec {
    /// Parameter tensor shapes in storage order.
    pub fn parameter_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs, .. } => vec![vec![inputs, outputs], vec![outputs]],
            LayerSpec::Conv1d {
                width,
                in_channels,
                filters,
                ..
            } => vec![vec![filters, width, in_channels], vec![filters]],
            LayerSpec::MaxPool1d { .. } | LayerSpec::Flatten => Vec::new(),
        }
    }

    /// Per-sample output shape, or `None` when the input does not fit.
    pub fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        match (*self, input) {
            (LayerSpec::Dense { inputs, outputs, .. }, [n]) if *n == inputs => Some(vec![outputs]),
            (
                LayerSpec::Conv1d {
                    width,
                    in_channels,
                    filters,
                    ..
                },
                [len, ch],
            ) if *ch == in_channels && *len >= width => Some(vec![len - width + 1, filters]),
            (LayerSpec::MaxPool1d { window }, [len, ch]) if *len >= window => Some(vec![len / window, *ch]),
            (LayerSpec::Flatten, [a, b]) => Some(vec![a * b]),
            (LayerSpec::Flatten, [n]) => Some(vec![*n]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Conv1d(Conv1DLayer),
    MaxPool1d(MaxPool1DLayer),
    Flatten,
}

impl Layer {
    pub fn init(spec: &LayerSpec, rng: &mut SeededRng) -> Result<Self, NnError> {
        Ok(match *spec {
            LayerSpec::Dense {
                inputs,
                outputs,
                activation,
            } => Layer::Dense(DenseLayer::init(inputs, outputs, activation, rng)),
            LayerSpec::Conv1d {
                width,
                in_channels,
                filters,
                activation,
            } => Layer::Conv1d(Conv1DLayer::init(width, in_channels, filters, activation, rng)),
            LayerSpec::MaxPool1d { window } => Layer::MaxPool1d(MaxPool1DLayer::new(window)?),
            LayerSpec::Flatten => Layer::Flatten,
        })
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(d) => LayerSpec::Dense {
                inputs: d.inputs(),
                outputs: d.outputs(),
                activation: d.activation,
            },
            Layer::Conv1d(c) => LayerSpec::Conv1d {
                width: c.width(),
                in_channels: c.in_channels(),
                filters: c.num_filters(),
                activation: c.activation,
            },
            Layer::MaxPool1d(p) => LayerSpec::MaxPool1d { window: p.window },
            Layer::Flatten => LayerSpec::Flatten,
        }
    }

    fn parameters(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense(d) => vec![&d.weights, &d.bias],
            Layer::Conv1d(c) => vec![&c.filters, &c.bias],
            Layer::MaxPool1d(_) | Layer::Flatten => Vec::new(),
        }
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense(d) => vec![&mut d.weights, &mut d.bias],
            Layer::Conv1d(c) => vec![&mut c.filters, &mut c.bias],
            Layer::MaxPool1d(_) | Layer::Flatten => Vec::new(),
        }
    }

    /// Batched forward; also returns pool argmaxes for the backward pass.
    fn forward(&self, x: &Tensor) -> Result<(Tensor, Option<Vec<usize>>), NnError> {
        let shape = x.shape();
        let batch = shape[0];
        let out_sample = self
            .spec()
            .output_shape(&shape[1..])
            .ok_or_else(|| match (self, shape) {
                (Layer::Conv1d(c), [_, len, _]) if *len < c.width() => NnError::InputTooShort {
                    len: *len,
                    needed: c.width(),
                },
                (Layer::MaxPool1d(p), [_, len, _]) if *len < p.window => NnError::InputTooShort {
                    len: *len,
                    needed: p.window,
                },
                _ => NnError::ShapeMismatch(format!("{:?} cannot take input {shape:?}", self.spec())),
            })?;
        let mut out_shape = vec![batch];
        out_shape.extend(&out_sample);
        let (data, argmax) = match self {
            Layer::Dense(d) => (d.forward_batch(x.data(), batch), None),
            Layer::Conv1d(c) => (c.forward_batch(x.data(), batch, shape[1]), None),
            Layer::MaxPool1d(p) => {
                let (y, idx) = p.forward_batch(x.data(), batch, shape[1], shape[2]);
                (y, Some(idx))
            }
            Layer::Flatten => (x.data().to_vec(), None),
        };
        Ok((Tensor::new(&out_shape, data)?, argmax))
    }
}

/// What the network output is trained against.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Softmax over the output logits followed by cross-entropy.
    Classification(&'a [usize]),
    /// Mean squared error between output and target.
    Reconstruction(&'a Tensor),
}

impl Objective<'_> {
    /// Loss of a finished forward output.
    pub fn loss(&self, output: &Tensor) -> Result<f64, NnError> {
        Ok(self.loss_and_grad(output)?.0)
    }

    fn loss_and_grad(&self, output: &Tensor) -> Result<(f64, Tensor), NnError> {
        match self {
            Objective::Classification(targets) => softmax_cross_entropy_grad(output, targets),
            Objective::Reconstruction(target) => mse_grad(output, target),
        }
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    /// `activations[i]` is the input to layer `i`; the last entry is the
    /// network output.
    activations: Vec<Tensor>,
    argmax: Vec<Option<Vec<usize>>>,
}

/// A sequential stack of layers. Training forwards cache activations on the
/// instance, so one network is driven by one thread at a time; the
/// `&self` inference path is free of that state.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    cache: Option<ForwardCache>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers, cache: None }
    }

    /// Glorot-initialized network; parameters are drawn layer by layer in
    /// storage order from one stream seeded by `seed`.
    pub fn from_specs(specs: &[LayerSpec], seed: u64) -> Result<Self, NnError> {
        let mut rng = SeededRng::new(seed);
        let layers = specs
            .iter()
            .map(|s| Layer::init(s, &mut rng))
            .collect::<Result<_, _>>()?;
        Ok(Self::new(layers))
    }

    /// Rebuilds a network from specs and parameter tensors in storage order.
    pub fn from_parameters(specs: &[LayerSpec], params: Vec<Tensor>) -> Result<Self, NnError> {
        let mut params = params.into_iter();
        let mut layers = Vec::with_capacity(specs.len());
        let mut take = |shape: &[usize]| -> Result<Tensor, NnError> {
            let t = params
                .next()
                .ok_or_else(|| NnError::ShapeMismatch("too few parameter tensors".into()))?;
            if t.shape() != shape {
                return Err(NnError::ShapeMismatch(format!(
                    "parameter shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(t)
        };
        for spec in specs {
            let shapes = spec.parameter_shapes();
            layers.push(match *spec {
                LayerSpec::Dense { activation, .. } => {
                    Layer::Dense(DenseLayer::new(take(&shapes[0])?, take(&shapes[1])?, activation)?)
                }
                LayerSpec::Conv1d { activation, .. } => {
                    Layer::Conv1d(Conv1DLayer::new(take(&shapes[0])?, take(&shapes[1])?, activation)?)
                }
                LayerSpec::MaxPool1d { window } => Layer::MaxPool1d(MaxPool1DLayer::new(window)?),
                LayerSpec::Flatten => Layer::Flatten,
            });
        }
        if params.next().is_some() {
            return Err(NnError::ShapeMismatch("too many parameter tensors".into()));
        }
        Ok(Self::new(layers))
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::parameters).collect()
    }

    /// Mutable parameter access; drops any cached forward pass.
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.cache = None;
        self.layers.iter_mut().flat_map(Layer::parameters_mut).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Output shape per sample for a given per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        self.layers.iter().try_fold(input.to_vec(), |shape, layer| {
            layer.spec().output_shape(&shape).ok_or_else(|| {
                NnError::ShapeMismatch(format!("{:?} cannot take input {shape:?}", layer.spec()))
            })
        })
    }

    /// Inference forward pass; leaves no cache behind.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.forward_range(x, 0..self.layers.len())
    }

    /// Forward through `layers[range]` only.
    pub fn forward_range(&self, x: &Tensor, range: Range<usize>) -> Result<Tensor, NnError> {
        let mut current = x.clone();
        for layer in &self.layers[range] {
            current = layer.forward(&current)?.0;
        }
        Ok(current)
    }

    /// Forward pass that keeps every activation for [`Network::backward`].
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        self.cache = None;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut argmax = Vec::with_capacity(self.layers.len());
        activations.push(x.clone());
        for layer in &self.layers {
            let (out, idx) = layer.forward(activations.last().expect("non-empty"))?;
            activations.push(out);
            argmax.push(idx);
        }
        let output = activations.last().expect("non-empty").clone();
        self.cache = Some(ForwardCache { activations, argmax });
        Ok(output)
    }

    /// Loss and one gradient tensor per parameter tensor, in
    /// [`Network::parameters`] order. Consumes the cache left by
    /// [`Network::forward_train`], which must have seen this exact batch.
    pub fn backward(&mut self, batch: &Tensor, objective: Objective<'_>) -> Result<(f64, Vec<Tensor>), NnError> {
        let cache = self.cache.take().ok_or(NnError::StaleCache)?;
        if cache.activations[0] != *batch {
            return Err(NnError::StaleCache);
        }
        let output = cache.activations.last().expect("non-empty");
        let (loss, mut grad) = objective.loss_and_grad(output)?;

        let mut per_layer: Vec<Vec<Tensor>> = vec![Vec::new(); self.layers.len()];
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.activations[l];
            let out = &cache.activations[l + 1];
            let need_dx = l > 0;
            let batch = input.shape()[0];
            let dx = match layer {
                Layer::Dense(d) => {
                    let (dw, db, dx) = d.backward_batch(input.data(), out.data(), grad.data(), batch, need_dx);
                    per_layer[l] = vec![dw, db];
                    dx
                }
                Layer::Conv1d(c) => {
                    let (df, db, dx) =
                        c.backward_batch(input.data(), out.data(), grad.data(), batch, input.shape()[1], need_dx);
                    per_layer[l] = vec![df, db];
                    dx
                }
                Layer::MaxPool1d(_) => {
                    let argmax = cache.argmax[l].as_ref().expect("pool argmax cached");
                    let mut dx = vec![0.0; input.len()];
                    for (&src, &g) in argmax.iter().zip(grad.data()) {
                        dx[src] += g;
                    }
                    Some(dx)
                }
                Layer::Flatten => Some(grad.data().to_vec()),
            };
            if let Some(dx) = dx {
                grad = Tensor::new(input.shape(), dx)?;
            }
        }
        Ok((loss, per_layer.into_iter().flatten().collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_mlp() -> Network {
        Network::from_specs(
            &[
                LayerSpec::Dense { inputs: 3, outputs: 4, activation: Activation::Relu },
                LayerSpec::Dense { inputs: 4, outputs: 2, activation: Activation::Linear },
            ],
            5,
        )
        .unwrap()
    }

    #[test]
    fn same_seed_same_parameters() {
        assert_eq!(tiny_mlp(), tiny_mlp());
        let other = Network::from_specs(&tiny_mlp().specs(), 6).unwrap();
        assert_ne!(tiny_mlp(), other);
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let net = tiny_mlp();
        let limit = (6.0f64 / 7.0).sqrt();
        let params = net.parameters();
        assert!(params[0].data().iter().all(|w| w.abs() < limit));
        assert!(params[1].data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn backward_requires_matching_forward() {
        let mut net = tiny_mlp();
        let x = Tensor::new(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(net.backward(&x, Objective::Classification(&[0])), Err(NnError::StaleCache)));
        net.forward_train(&x).unwrap();
        let y = Tensor::new(&[1, 3], vec![1.0, 2.0, 4.0]).unwrap();
        assert!(matches!(net.backward(&y, Objective::Classification(&[0])), Err(NnError::StaleCache)));
        net.forward_train(&x).unwrap();
        assert!(net.backward(&x, Objective::Classification(&[0])).is_ok());
        assert!(matches!(net.backward(&x, Objective::Classification(&[0])), Err(NnError::StaleCache)));
    }

    #[test]
    fn single_linear_unit_mse_gradient() {
        // y = w·x + b on one scalar sample; dL/dw = 2(y - t)·x, dL/db = 2(y - t).
        let layer = DenseLayer::new(
            Tensor::new(&[1, 1], vec![0.5]).unwrap(),
            Tensor::new(&[1], vec![0.25]).unwrap(),
            Activation::Linear,
        )
        .unwrap();
        let mut net = Network::new(vec![Layer::Dense(layer)]);
        let x = Tensor::new(&[1, 1], vec![3.0]).unwrap();
        let target = Tensor::new(&[1, 1], vec![1.0]).unwrap();
        net.forward_train(&x).unwrap();
        let (loss, grads) = net.backward(&x, Objective::Reconstruction(&target)).unwrap();
        let y = 0.5 * 3.0 + 0.25;
        assert_eq!(loss, (y - 1.0) * (y - 1.0));
        assert_eq!(grads[0].data(), &[2.0 * (y - 1.0) * 3.0]);
        assert_eq!(grads[1].data(), &[2.0 * (y - 1.0)]);
    }

    #[test]
    fn zero_loss_gives_zero_gradients() {
        let mut net = tiny_mlp();
        let x = Tensor::new(&[2, 3], vec![0.1, -0.3, 0.7, 1.0, 0.2, -0.5]).unwrap();
        let target = net.forward(&x).unwrap();
        net.forward_train(&x).unwrap();
        let (loss, grads) = net.backward(&x, Objective::Reconstruction(&target)).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn shape_algebra_matches_forward() {
        let specs = [
            LayerSpec::Conv1d { width: 2, in_channels: 3, filters: 4, activation: Activation::Relu },
            LayerSpec::MaxPool1d { window: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 12, outputs: 2, activation: Activation::Linear },
        ];
        let net = Network::from_specs(&specs, 1).unwrap();
        assert_eq!(net.output_shape(&[7, 3]).unwrap(), vec![2]);
        let out = net.forward(&Tensor::zeros(&[5, 7, 3])).unwrap();
        assert_eq!(out.shape(), &[5, 2]);
        assert!(matches!(net.forward(&Tensor::zeros(&[1, 1, 3])), Err(NnError::InputTooShort { .. })));
    }

    #[test]
    fn rebuild_from_parameters() {
        let net = tiny_mlp();
        let params: Vec<Tensor> = net.parameters().into_iter().cloned().collect();
        assert_eq!(Network::from_parameters(&net.specs(), params.clone()).unwrap(), net);
        assert!(Network::from_parameters(&net.specs(), params[..3].to_vec()).is_err());
    }
}
