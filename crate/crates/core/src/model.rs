//! A dense classifier trained with mini-batch SGD and averaged with FedAvg.
//!
//! Architectures are stacks of fully connected layers with ReLU between them
//! and a softmax cross-entropy head; no hidden layer gives softmax
//! regression. Parameters live in one flat vector, layer by layer, each layer
//! storing its `fan_out x fan_in` weights row-major followed by its biases.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::partition::ClientDataset;
use crate::rng;
use crate::{Error, Result};

/// Flops per parameter per sample for one forward and backward pass.
pub const TRAIN_FLOPS_PER_PARAM: u64 = 6;
/// Flops per parameter per sample for a forward pass only.
pub const FORWARD_FLOPS_PER_PARAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArch {
    pub input_dim: usize,
    /// Hidden layer widths; empty for softmax regression.
    pub hidden: Vec<usize>,
    pub classes: usize,
}

impl ModelArch {
    pub fn softmax_regression(input_dim: usize, classes: usize) -> Self {
        Self {
            input_dim,
            hidden: Vec::new(),
            classes,
        }
    }

    pub fn mlp(input_dim: usize, hidden: &[usize], classes: usize) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            classes,
        }
    }

    /// `(fan_in, fan_out)` of every layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden);
        widths.push(self.classes);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.classes < 2 || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig(
                "layer widths must be positive, classes >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// `6 * sum(fan_in * fan_out + fan_out)`: forward plus backward per sample.
pub fn count_flops_per_sample(arch: &ModelArch) -> u64 {
    TRAIN_FLOPS_PER_PARAM * arch.param_count() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: ModelArch,
    pub theta: Vec<f64>,
}

impl ModelParams {
    pub fn param_count(&self) -> usize {
        self.theta.len()
    }
}

/// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
pub fn init_model(arch: &ModelArch, seed: u64) -> Result<ModelParams> {
    arch.validate()?;
    let mut rng = rng::stream(seed, "init", 0);
    let mut theta = Vec::with_capacity(arch.param_count());
    for (fan_in, fan_out) in arch.layers() {
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        theta.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
        theta.extend(core::iter::repeat_n(0.0, fan_out));
    }
    Ok(ModelParams {
        arch: arch.clone(),
        theta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "train.epochs and train.batch_size must be >= 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(
                "train.learning_rate must be non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(
                "train.momentum must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Scratch buffers and layer offsets for one architecture.
struct Network {
    layers: Vec<(usize, usize)>,
    /// Offset of each layer's weights in `theta`.
    offsets: Vec<usize>,
    /// Post-activation values, input first.
    acts: Vec<Vec<f64>>,
    /// Gradient of the loss w.r.t. each layer's pre-activation.
    deltas: Vec<Vec<f64>>,
}

impl Network {
    fn new(arch: &ModelArch) -> Self {
        let layers = arch.layers();
        let mut offsets = Vec::with_capacity(layers.len());
        let mut off = 0;
        for &(i, o) in &layers {
            offsets.push(off);
            off += i * o + o;
        }
        let mut acts = vec![vec![0.0; arch.input_dim]];
        acts.extend(layers.iter().map(|&(_, o)| vec![0.0; o]));
        let deltas = layers.iter().map(|&(_, o)| vec![0.0; o]).collect();
        Self {
            layers,
            offsets,
            acts,
            deltas,
        }
    }

    /// Fills `acts`; the last entry holds the logits.
    fn forward(&mut self, theta: &[f64], x: &[f64]) {
        self.acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, &(fan_in, fan_out)) in self.layers.iter().enumerate() {
            let w = &theta[self.offsets[l]..self.offsets[l] + fan_in * fan_out];
            let b = &theta
                [self.offsets[l] + fan_in * fan_out..self.offsets[l] + fan_in * fan_out + fan_out];
            let (before, after) = self.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let z = b[o]
                    + row
                        .iter()
                        .zip(input.iter())
                        .map(|(a, x)| a * x)
                        .sum::<f64>();
                out[o] = if l < last { z.max(0.0) } else { z };
            }
        }
    }

    fn logits(&self) -> &[f64] {
        self.acts.last().expect("at least one layer")
    }

    /// Cross-entropy of the current logits and the softmax probabilities,
    /// written into the output delta.
    fn loss_and_output_delta(&mut self, label: usize) -> f64 {
        let logits = self.acts.last().expect("output layer");
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|z| libm::exp(z - max)).sum();
        let log_norm = max + libm::log(sum);
        let delta = self.deltas.last_mut().expect("output layer");
        for (d, z) in delta.iter_mut().zip(logits) {
            *d = libm::exp(z - log_norm);
        }
        delta[label] -= 1.0;
        log_norm - logits[label]
    }

    /// Adds `scale` times the gradient of the last forward pass to `grad`.
    fn backward(&mut self, theta: &[f64], grad: &mut [f64], scale: f64) {
        for l in (0..self.layers.len()).rev() {
            let (fan_in, fan_out) = self.layers[l];
            let off = self.offsets[l];
            {
                let delta = &self.deltas[l];
                let input = &self.acts[l];
                let (gw, gb) =
                    grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for o in 0..fan_out {
                    let d = delta[o] * scale;
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, x) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &theta[off..off + fan_in * fan_out];
            let (lower, upper) = self.deltas.split_at_mut(l);
            let prev = &mut lower[l - 1];
            let delta = &upper[0];
            let act = &self.acts[l];
            for i in 0..fan_in {
                if act[i] <= 0.0 {
                    prev[i] = 0.0;
                    continue;
                }
                prev[i] = (0..fan_out).map(|o| w[o * fan_in + i] * delta[o]).sum();
            }
        }
    }
}

fn check_data(arch: &ModelArch, data: &ClientDataset) -> Result<()> {
    if data.feature_dim != arch.input_dim {
        return Err(Error::DimensionMismatch {
            expected: arch.input_dim,
            found: data.feature_dim,
        });
    }
    if data.classes() != arch.classes {
        return Err(Error::DimensionMismatch {
            expected: arch.classes,
            found: data.classes(),
        });
    }
    Ok(())
}

/// Mean cross-entropy over `idx` and its gradient (overwrites `grad`).
pub fn loss_and_gradient(
    params: &ModelParams,
    data: &ClientDataset,
    idx: &[usize],
    grad: &mut [f64],
) -> f64 {
    let mut net = Network::new(&params.arch);
    batch_gradient(&mut net, &params.theta, data, idx, grad)
}

fn batch_gradient(
    net: &mut Network,
    theta: &[f64],
    data: &ClientDataset,
    idx: &[usize],
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / idx.len() as f64;
    let mut loss = 0.0;
    for &i in idx {
        net.forward(theta, data.row(i));
        loss += net.loss_and_output_delta(data.labels[i]);
        net.backward(theta, grad, scale);
    }
    loss * scale
}

/// Result of local training on one client.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub params: ModelParams,
    /// Mean training loss over the final epoch.
    pub loss: f64,
    pub flops: u64,
}

/// `E` epochs of mini-batch SGD with heavy-ball momentum
/// (`v <- mu v - eta g; theta <- theta + v`), reshuffling every epoch.
pub fn local_train(
    model: &ModelParams,
    data: &ClientDataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LocalUpdate> {
    cfg.validate()?;
    check_data(&model.arch, data)?;
    if data.is_empty() {
        return Err(Error::Empty("local training set"));
    }
    let mut theta = model.theta.clone();
    let mut velocity = vec![0.0; theta.len()];
    let mut grad = vec![0.0; theta.len()];
    let mut net = Network::new(&model.arch);
    let mut order: Vec<usize> = (0..data.n_samples()).collect();
    let mut last_loss = 0.0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(seed, "shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let loss = batch_gradient(&mut net, &theta, data, batch, &mut grad);
            loss_sum += loss * batch.len() as f64;
            for ((t, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *t += *v;
            }
        }
        last_loss = loss_sum / data.n_samples() as f64;
    }
    let flops = count_flops_per_sample(&model.arch) * (data.n_samples() * cfg.epochs) as u64;
    Ok(LocalUpdate {
        params: ModelParams {
            arch: model.arch.clone(),
            theta,
        },
        loss: last_loss,
        flops,
    })
}

/// FedAvg: the data-size weighted mean of the given models, summed in the
/// order given.
pub fn fedavg_aggregate(updates: &[(&ModelParams, usize)]) -> Result<ModelParams> {
    let (first, _) = updates
        .first()
        .ok_or(Error::Empty("no updates to aggregate"))?;
    if updates
        .iter()
        .any(|(p, _)| p.arch != first.arch || p.theta.len() != first.theta.len())
    {
        return Err(Error::ArchitectureMismatch);
    }
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(Error::Empty("updates carry no samples"));
    }
    let mut theta = vec![0.0; first.theta.len()];
    for (p, n) in updates {
        let w = *n as f64 / total as f64;
        for (t, x) in theta.iter_mut().zip(&p.theta) {
            *t += w * x;
        }
    }
    Ok(ModelParams {
        arch: first.arch.clone(),
        theta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Accuracy (argmax, lowest class on ties) and mean cross-entropy.
pub fn evaluate(model: &ModelParams, data: &ClientDataset) -> Result<Evaluation> {
    check_data(&model.arch, data)?;
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut net = Network::new(&model.arch);
    let mut correct = 0usize;
    let mut loss = 0.0;
    for i in 0..data.n_samples() {
        net.forward(&model.theta, data.row(i));
        let logits = net.logits();
        let mut best = 0;
        for (c, z) in logits.iter().enumerate() {
            if *z > logits[best] {
                best = c;
            }
        }
        if best == data.labels[i] {
            correct += 1;
        }
        loss += net.loss_and_output_delta(data.labels[i]);
    }
    let n = data.n_samples() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: loss / n,
    })
}

/// Mean loss over the whole of `data`, with the forward-pass flop count.
pub fn dataset_loss(model: &ModelParams, data: &ClientDataset) -> Result<(f64, u64)> {
    let eval = evaluate(model, data)?;
    let flops = FORWARD_FLOPS_PER_PARAM * model.arch.param_count() as u64 * data.n_samples() as u64;
    Ok((eval.loss, flops))
}
