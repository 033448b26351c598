//! Central finite-difference gradient oracle.
//!
//! The oracle only uses the inference forward pass and the objective's loss.
//! It never touches `Network::backward`. A parameter whose ±h perturbation
//! flips a relu on/off state or a pooling argmax is reported as straddling
//! a kink and excluded, because the loss is not differentiable there.

#![allow(dead_code)]

use psa_core::nn::{Activation, Layer, LayerSpec, Network, Objective, Tensor};
use psa_core::rng::SeededRng;

pub const STEP: f64 = 1e-5;
/// Denominator floor for the relative error of near-zero gradients.
pub const REL_FLOOR: f64 = 1e-6;

pub struct Case {
    pub name: String,
    pub network: Network,
    pub input: Tensor,
    pub classes: Option<Vec<usize>>,
    pub target: Option<Tensor>,
}

impl Case {
    pub fn objective(&self) -> Objective<'_> {
        match (&self.classes, &self.target) {
            (Some(c), _) => Objective::Classification(c),
            (None, Some(t)) => Objective::Reconstruction(t),
            _ => unreachable!("case has no objective"),
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct Report {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
}

impl Report {
    pub fn merge(&mut self, other: &Report) {
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
    }
}

/// Relu on/off states and pool argmaxes across every layer.
fn kink_signature(net: &Network, x: &Tensor) -> Vec<usize> {
    let mut sig = Vec::new();
    let mut current = x.clone();
    for (l, layer) in net.layers().iter().enumerate() {
        let next = net.forward_range(&current, l..l + 1).expect("forward");
        match layer {
            Layer::Dense(d) if d.activation == Activation::Relu => {
                sig.extend(next.data().iter().map(|&v| (v > 0.0) as usize))
            }
            Layer::Conv1d(c) if c.activation == Activation::Relu => {
                sig.extend(next.data().iter().map(|&v| (v > 0.0) as usize))
            }
            Layer::MaxPool1d(p) => {
                let (batch, len, ch) = (current.shape()[0], current.shape()[1], current.shape()[2]);
                let d = current.data();
                for s in 0..batch {
                    for t in 0..len / p.window {
                        for c in 0..ch {
                            let at = |w: usize| d[s * len * ch + (t * p.window + w) * ch + c];
                            let mut best = 0;
                            for w in 1..p.window {
                                if at(w) > at(best) {
                                    best = w;
                                }
                            }
                            sig.push(best);
                        }
                    }
                }
            }
            _ => {}
        }
        current = next;
    }
    sig
}

fn loss_at(net: &Network, case: &Case) -> f64 {
    let out = net.forward(&case.input).expect("forward");
    case.objective().loss(&out).expect("loss")
}

/// Compares the analytic gradients of `case` against central differences.
pub fn check(case: &Case) -> Report {
    let mut net = case.network.clone();
    net.forward_train(&case.input).expect("forward_train");
    let (_, analytic) = net.backward(&case.input, case.objective()).expect("backward");

    let mut report = Report::default();
    let mut probe = case.network.clone();
    let n_params = probe.parameters().len();
    for p in 0..n_params {
        let len = probe.parameters()[p].len();
        for i in 0..len {
            let original = probe.parameters()[p].data()[i];
            probe.parameters_mut()[p].data_mut()[i] = original + STEP;
            let plus = loss_at(&probe, case);
            let sig_plus = kink_signature(&probe, &case.input);
            probe.parameters_mut()[p].data_mut()[i] = original - STEP;
            let minus = loss_at(&probe, case);
            let sig_minus = kink_signature(&probe, &case.input);
            probe.parameters_mut()[p].data_mut()[i] = original;

            if sig_plus != sig_minus {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic[p].data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(rel);
        }
    }
    report
}

fn random_tensor(rng: &mut SeededRng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.symmetric(scale)).collect()).unwrap()
}

fn pick<T: Copy>(rng: &mut SeededRng, items: &[T]) -> T {
    items[rng.below(items.len())]
}

/// A deterministic family of small networks covering dense, conv1d, max
/// pooling, softmax + cross-entropy and autoencoder + MSE paths.
pub fn random_cases(count: usize, seed: u64) -> Vec<Case> {
    let mut rng = SeededRng::new(seed);
    let acts = [Activation::Relu, Activation::Linear, Activation::Sigmoid];
    (0..count)
        .map(|i| {
            let batch = 2 + rng.below(3);
            let net_seed = rng.next_u64();
            match i % 3 {
                0 => {
                    let input = 3 + rng.below(4);
                    let hidden = 3 + rng.below(5);
                    let classes = 2 + rng.below(3);
                    let specs = [
                        LayerSpec::Dense { inputs: input, outputs: hidden, activation: pick(&mut rng, &acts) },
                        LayerSpec::Dense { inputs: hidden, outputs: hidden, activation: pick(&mut rng, &acts) },
                        LayerSpec::Dense { inputs: hidden, outputs: classes, activation: Activation::Linear },
                    ];
                    Case {
                        name: format!("mlp#{i}"),
                        network: Network::from_specs(&specs, net_seed).unwrap(),
                        input: random_tensor(&mut rng, &[batch, input], 1.0),
                        classes: Some((0..batch).map(|_| rng.below(classes)).collect()),
                        target: None,
                    }
                }
                1 => {
                    let len = 8 + rng.below(5);
                    let ch = 2 + rng.below(2);
                    let filters = 2 + rng.below(3);
                    let width = 1 + rng.below(3);
                    let pool = 2;
                    let l1 = (len - width + 1) / pool;
                    let width2 = 1 + rng.below(2);
                    let l2 = (l1 - width2 + 1) / pool;
                    let classes = 2 + rng.below(2);
                    let specs = [
                        LayerSpec::Conv1d { width, in_channels: ch, filters, activation: pick(&mut rng, &acts) },
                        LayerSpec::MaxPool1d { window: pool },
                        LayerSpec::Conv1d { width: width2, in_channels: filters, filters: 3, activation: Activation::Relu },
                        LayerSpec::MaxPool1d { window: pool },
                        LayerSpec::Flatten,
                        LayerSpec::Dense { inputs: l2 * 3, outputs: 5, activation: Activation::Relu },
                        LayerSpec::Dense { inputs: 5, outputs: classes, activation: Activation::Linear },
                    ];
                    Case {
                        name: format!("cnn#{i}"),
                        network: Network::from_specs(&specs, net_seed).unwrap(),
                        input: random_tensor(&mut rng, &[batch, len, ch], 1.0),
                        classes: Some((0..batch).map(|_| rng.below(classes)).collect()),
                        target: None,
                    }
                }
                _ => {
                    let dim = 3 + rng.below(4);
                    let wide = dim + 2 + rng.below(4);
                    let code = 2 + rng.below(2);
                    let specs = [
                        LayerSpec::Dense { inputs: dim, outputs: wide, activation: Activation::Relu },
                        LayerSpec::Dense { inputs: wide, outputs: code, activation: pick(&mut rng, &acts) },
                        LayerSpec::Dense { inputs: code, outputs: wide, activation: Activation::Relu },
                        LayerSpec::Dense { inputs: wide, outputs: dim, activation: Activation::Linear },
                    ];
                    let input = random_tensor(&mut rng, &[batch, dim], 1.0);
                    Case {
                        name: format!("autoencoder#{i}"),
                        network: Network::from_specs(&specs, net_seed).unwrap(),
                        target: Some(input.clone()),
                        input,
                        classes: None,
                    }
                }
            }
        })
        .collect()
}
