use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation's output. For relu the
    /// derivative at exactly zero is zero.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    fn apply_slice(self, values: &mut [f64]) {
        if self != Activation::Linear {
            values.iter_mut().for_each(|v| *v = self.apply(*v));
        }
    }

    /// Turns `dL/dy` into `dL/dz` in place.
    fn chain(self, outputs: &[f64], grads: &mut [f64]) {
        if self != Activation::Linear {
            for (g, &y) in grads.iter_mut().zip(outputs) {
                *g *= self.derivative_from_output(y);
            }
        }
    }
}

/// Four-lane dot product; the lane split fixes the summation order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

fn glorot(rng: &mut SeededRng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.symmetric(limit)).collect();
    Tensor::new(shape, data).expect("glorot shape")
}

/// Fully connected layer: `out[j] = act(b[j] + Σ_i x[i]·W[i,j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// Shape `(inputs, outputs)`.
    pub weights: Tensor,
    /// Shape `(outputs)`.
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self, NnError> {
        if weights.rank() != 2 || bias.shape() != [weights.shape()[1]] {
            return Err(NnError::ShapeMismatch(format!(
                "dense weights {:?} with bias {:?}",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init(inputs: usize, outputs: usize, activation: Activation, rng: &mut SeededRng) -> Self {
        Self {
            weights: glorot(rng, &[inputs, outputs], inputs, outputs),
            bias: Tensor::zeros(&[outputs]),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub(crate) fn forward_batch(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let (k, n) = (self.inputs(), self.outputs());
        let w = self.weights.data();
        let mut y = Vec::with_capacity(batch * n);
        for _ in 0..batch {
            y.extend_from_slice(self.bias.data());
        }
        // Row-of-W outer loop streams the weights once per batch.
        for p in 0..k {
            let wp = &w[p * n..(p + 1) * n];
            for i in 0..batch {
                let a = x[i * k + p];
                if a != 0.0 {
                    axpy(&mut y[i * n..(i + 1) * n], a, wp);
                }
            }
        }
        self.activation.apply_slice(&mut y);
        y
    }

    /// Returns `(dW, db, dX)`; `dX` only when requested.
    pub(crate) fn backward_batch(
        &self,
        x: &[f64],
        y: &[f64],
        dy: &[f64],
        batch: usize,
        need_dx: bool,
    ) -> (Tensor, Tensor, Option<Vec<f64>>) {
        let (k, n) = (self.inputs(), self.outputs());
        let mut dz = dy.to_vec();
        self.activation.chain(y, &mut dz);

        let mut db = vec![0.0; n];
        for i in 0..batch {
            for (acc, g) in db.iter_mut().zip(&dz[i * n..(i + 1) * n]) {
                *acc += g;
            }
        }
        let w = self.weights.data();
        let mut dw = vec![0.0; k * n];
        let mut dx = need_dx.then(|| vec![0.0; batch * k]);
        for p in 0..k {
            let dwp = &mut dw[p * n..(p + 1) * n];
            let wp = &w[p * n..(p + 1) * n];
            for i in 0..batch {
                let dzi = &dz[i * n..(i + 1) * n];
                let a = x[i * k + p];
                if a != 0.0 {
                    axpy(dwp, a, dzi);
                }
                if let Some(dx) = dx.as_mut() {
                    dx[i * k + p] = dot(dzi, wp);
                }
            }
        }
        (
            Tensor::new(&[k, n], dw).expect("dense grad shape"),
            Tensor::new(&[n], db).expect("dense grad shape"),
            dx,
        )
    }
}

/// Dense forward over a `(batch, inputs)` matrix.
pub fn dense_forward(x: &Tensor, layer: &DenseLayer) -> Result<Tensor, NnError> {
    if x.rank() != 2 || x.shape()[1] != layer.inputs() {
        return Err(NnError::ShapeMismatch(format!(
            "dense layer expects (batch, {}), got {:?}",
            layer.inputs(),
            x.shape()
        )));
    }
    let batch = x.shape()[0];
    Tensor::new(&[batch, layer.outputs()], layer.forward_batch(x.data(), batch))
}

/// Valid, stride-1 1D cross-correlation over a `(len, channels)` signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1DLayer {
    /// Shape `(num_filters, width, in_channels)`.
    pub filters: Tensor,
    /// Shape `(num_filters)`.
    pub bias: Tensor,
    pub activation: Activation,
}

impl Conv1DLayer {
    pub fn new(filters: Tensor, bias: Tensor, activation: Activation) -> Result<Self, NnError> {
        if filters.rank() != 3 || bias.shape() != [filters.shape()[0]] {
            return Err(NnError::ShapeMismatch(format!(
                "conv filters {:?} with bias {:?}",
                filters.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            filters,
            bias,
            activation,
        })
    }

    pub fn init(
        width: usize,
        in_channels: usize,
        num_filters: usize,
        activation: Activation,
        rng: &mut SeededRng,
    ) -> Self {
        Self {
            filters: glorot(
                rng,
                &[num_filters, width, in_channels],
                width * in_channels,
                width * num_filters,
            ),
            bias: Tensor::zeros(&[num_filters]),
            activation,
        }
    }

    pub fn num_filters(&self) -> usize {
        self.filters.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.filters.shape()[1]
    }

    pub fn in_channels(&self) -> usize {
        self.filters.shape()[2]
    }

    pub fn output_len(&self, len: usize) -> Option<usize> {
        (len >= self.width()).then(|| len - self.width() + 1)
    }

    pub(crate) fn forward_batch(&self, x: &[f64], batch: usize, len: usize) -> Vec<f64> {
        let (f, c) = (self.num_filters(), self.in_channels());
        let span = self.width() * c;
        let out_len = len - self.width() + 1;
        let filters = self.filters.data();
        let bias = self.bias.data();
        let mut y = vec![0.0; batch * out_len * f];
        for s in 0..batch {
            let xs = &x[s * len * c..(s + 1) * len * c];
            let ys = &mut y[s * out_len * f..(s + 1) * out_len * f];
            for t in 0..out_len {
                let window = &xs[t * c..t * c + span];
                for k in 0..f {
                    ys[t * f + k] = bias[k] + dot(window, &filters[k * span..(k + 1) * span]);
                }
            }
        }
        self.activation.apply_slice(&mut y);
        y
    }

    pub(crate) fn backward_batch(
        &self,
        x: &[f64],
        y: &[f64],
        dy: &[f64],
        batch: usize,
        len: usize,
        need_dx: bool,
    ) -> (Tensor, Tensor, Option<Vec<f64>>) {
        let (f, c) = (self.num_filters(), self.in_channels());
        let span = self.width() * c;
        let out_len = len - self.width() + 1;
        let filters = self.filters.data();
        let mut dz = dy.to_vec();
        self.activation.chain(y, &mut dz);

        let mut dfilters = vec![0.0; f * span];
        let mut dbias = vec![0.0; f];
        let mut dx = need_dx.then(|| vec![0.0; batch * len * c]);
        for s in 0..batch {
            let xs = &x[s * len * c..(s + 1) * len * c];
            let dzs = &dz[s * out_len * f..(s + 1) * out_len * f];
            for t in 0..out_len {
                let window = &xs[t * c..t * c + span];
                for k in 0..f {
                    let g = dzs[t * f + k];
                    if g == 0.0 {
                        continue;
                    }
                    dbias[k] += g;
                    axpy(&mut dfilters[k * span..(k + 1) * span], g, window);
                    if let Some(dx) = dx.as_mut() {
                        let base = s * len * c + t * c;
                        axpy(&mut dx[base..base + span], g, &filters[k * span..(k + 1) * span]);
                    }
                }
            }
        }
        (
            Tensor::new(self.filters.shape(), dfilters).expect("conv grad shape"),
            Tensor::new(&[f], dbias).expect("conv grad shape"),
            dx,
        )
    }
}

pub fn conv1d_forward(x: &Tensor, layer: &Conv1DLayer) -> Result<Tensor, NnError> {
    if x.rank() != 2 || x.shape()[1] != layer.in_channels() {
        return Err(NnError::ShapeMismatch(format!(
            "conv layer expects (len, {}), got {:?}",
            layer.in_channels(),
            x.shape()
        )));
    }
    let len = x.shape()[0];
    let out_len = layer.output_len(len).ok_or(NnError::InputTooShort {
        len,
        needed: layer.width(),
    })?;
    Tensor::new(&[out_len, layer.num_filters()], layer.forward_batch(x.data(), 1, len))
}

/// Non-overlapping max pooling with stride equal to the window; a trailing
/// remainder shorter than the window is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool1DLayer {
    pub window: usize,
}

impl MaxPool1DLayer {
    pub fn new(window: usize) -> Result<Self, NnError> {
        if window == 0 {
            return Err(NnError::ShapeMismatch("pool window must be at least 1".into()));
        }
        Ok(Self { window })
    }

    pub fn stride(&self) -> usize {
        self.window
    }

    pub fn output_len(&self, len: usize) -> Option<usize> {
        (len >= self.window).then(|| len / self.window)
    }

    /// Pooled values and, per output, the flat input index of the max.
    /// Ties go to the lowest index.
    pub(crate) fn forward_batch(&self, x: &[f64], batch: usize, len: usize, ch: usize) -> (Vec<f64>, Vec<usize>) {
        let out_len = len / self.window;
        let mut y = Vec::with_capacity(batch * out_len * ch);
        let mut argmax = Vec::with_capacity(batch * out_len * ch);
        for s in 0..batch {
            let base = s * len * ch;
            for t in 0..out_len {
                for c in 0..ch {
                    let mut best = base + t * self.window * ch + c;
                    for w in 1..self.window {
                        let idx = base + (t * self.window + w) * ch + c;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    y.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        (y, argmax)
    }
}

pub fn maxpool1d_forward(x: &Tensor, layer: &MaxPool1DLayer) -> Result<Tensor, NnError> {
    if x.rank() != 2 {
        return Err(NnError::ShapeMismatch(format!(
            "pool expects (len, channels), got {:?}",
            x.shape()
        )));
    }
    let (len, ch) = (x.shape()[0], x.shape()[1]);
    let out_len = layer.output_len(len).ok_or(NnError::InputTooShort {
        len,
        needed: layer.window,
    })?;
    let (y, _) = layer.forward_batch(x.data(), 1, len, ch);
    Tensor::new(&[out_len, ch], y)
}
