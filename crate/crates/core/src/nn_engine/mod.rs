//! A small feed-forward network stack: dense and 1D-convolution layers,
//! activations, inverted dropout, multi-branch inputs joined by
//! concatenation, and minibatch training with backpropagation.
//!
//! A network is a list of input branches, each a chain of layers over its
//! own input tensor, whose flattened outputs are concatenated and passed
//! through a head. Tensors are stored channel-major (`channels x length`).

pub mod arch;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SLOTS_PER_DAY;

pub use arch::{build_architecture, Architecture, NnTarget};

pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Conv1d { channels_in: usize, filters: usize, kernel: usize, stride: usize },
    Relu,
    Sigmoid,
    Dropout { rate: f64 },
    Flatten,
}

/// Shape of an activation tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub length: usize,
}

impl Shape {
    pub fn flat(n: usize) -> Self {
        Self { channels: 1, length: n }
    }

    pub fn size(&self) -> usize {
        self.channels * self.length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub name: String,
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// One ReLU neuron.
    DpScalar,
    /// 48 sigmoid neurons with cumulative ordinal coding.
    IpOrdinal48,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub branches: Vec<BranchSpec>,
    /// Layers after concatenation, including the output layer and activation.
    pub head: Vec<LayerSpec>,
    pub output: OutputKind,
}

fn layer_output(layer: &LayerSpec, input: Shape, where_: &str) -> Result<Shape> {
    let shape_err = |expected: String| Error::Shape {
        layer: where_.to_string(),
        expected,
        got: format!("{}x{}", input.channels, input.length),
    };
    match *layer {
        LayerSpec::Dense { input: i, output } => {
            if input.channels != 1 || input.length != i {
                return Err(shape_err(format!("1x{i}")));
            }
            Ok(Shape::flat(output))
        }
        LayerSpec::Conv1d {
            channels_in,
            filters,
            kernel,
            stride,
        } => {
            if input.channels != channels_in {
                return Err(shape_err(format!("{channels_in} channels")));
            }
            if kernel == 0 || stride == 0 || kernel > input.length {
                return Err(Error::Parameter(format!(
                    "{where_}: kernel {kernel} does not fit input length {} (stride {stride})",
                    input.length
                )));
            }
            Ok(Shape {
                channels: filters,
                length: (input.length - kernel) / stride + 1,
            })
        }
        LayerSpec::Dropout { rate } => {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Parameter(format!("{where_}: dropout rate {rate} not in [0, 1)")));
            }
            Ok(input)
        }
        LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input),
        LayerSpec::Flatten => Ok(Shape::flat(input.size())),
    }
}

impl NetworkSpec {
    /// Output shape of every branch and of the head; validates the chain.
    pub fn shapes(&self) -> Result<(Vec<Shape>, Shape)> {
        let mut outs = Vec::new();
        for b in &self.branches {
            let mut s = b.input;
            for (i, l) in b.layers.iter().enumerate() {
                s = layer_output(l, s, &format!("{}[{i}]", b.name))?;
            }
            if s.channels != 1 {
                return Err(Error::Shape {
                    layer: format!("{} output", b.name),
                    expected: "flattened branch output".into(),
                    got: format!("{}x{}", s.channels, s.length),
                });
            }
            outs.push(s);
        }
        let mut s = Shape::flat(outs.iter().map(|o| o.length).sum());
        for (i, l) in self.head.iter().enumerate() {
            s = layer_output(l, s, &format!("head[{i}]"))?;
        }
        let want = match self.output {
            OutputKind::DpScalar => 1,
            OutputKind::IpOrdinal48 => SLOTS_PER_DAY,
        };
        if s != Shape::flat(want) {
            return Err(Error::Shape {
                layer: "output".into(),
                expected: format!("1x{want}"),
                got: format!("{}x{}", s.channels, s.length),
            });
        }
        Ok((outs, s))
    }

    fn layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.branches.iter().flat_map(|b| b.layers.iter()).chain(self.head.iter())
    }

    /// Number of trainable parameters.
    pub fn parameter_count(&self) -> Result<usize> {
        self.shapes()?;
        Ok(self.layers().map(param_count).sum())
    }
}

fn param_count(l: &LayerSpec) -> usize {
    match *l {
        LayerSpec::Dense { input, output } => input * output + output,
        LayerSpec::Conv1d {
            channels_in,
            filters,
            kernel,
            ..
        } => filters * channels_in * kernel + filters,
        _ => 0,
    }
}

/// Weights and biases of one layer (empty for parameter-free layers).
/// Dense weights are `output x input` row-major; convolution weights are
/// `filters x channels_in x kernel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub version: u32,
    pub spec: NetworkSpec,
    /// One entry per layer: branches in order, then the head.
    pub params: Vec<LayerParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mse,
    OrdinalBce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub loss: Loss,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate >= 0.0) {
            return Err(Error::Parameter(format!(
                "invalid training configuration: epochs {}, batch size {}, learning rate {}",
                self.epochs, self.batch_size, self.learning_rate
            )));
        }
        Ok(())
    }
}

/// One training example: one flattened input per branch and the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub inputs: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

/// Cached state of one forward pass, consumed by backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to every layer, in layer order, plus the final output.
    activations: Vec<Vec<f64>>,
    shapes: Vec<Shape>,
    masks: Vec<Option<Vec<f64>>>,
    pub output: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Valid cross-correlation of a `channels_in x length` input.
pub fn conv1d_forward(
    input: &[f64],
    length: usize,
    weights: &[f64],
    bias: &[f64],
    channels_in: usize,
    kernel: usize,
    stride: usize,
) -> Result<Vec<f64>> {
    if kernel == 0 || kernel > length || stride == 0 {
        return Err(Error::Parameter(format!("kernel {kernel} does not fit input length {length}")));
    }
    if input.len() != channels_in * length {
        return Err(Error::Shape {
            layer: "conv1d".into(),
            expected: format!("{channels_in}x{length}"),
            got: format!("{} values", input.len()),
        });
    }
    let filters = bias.len();
    let out_len = (length - kernel) / stride + 1;
    let mut out = vec![0.0; filters * out_len];
    for f in 0..filters {
        for o in 0..out_len {
            let mut acc = bias[f];
            for c in 0..channels_in {
                let w = &weights[(f * channels_in + c) * kernel..][..kernel];
                let x = &input[c * length + o * stride..][..kernel];
                acc += w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            out[f * out_len + o] = acc;
        }
    }
    Ok(out)
}

impl Network {
    /// Initialize weights (He-uniform for dense and convolution layers,
    /// zero biases) from `seed`.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = spec
            .layers()
            .map(|l| {
                let (fan_in, n_w, n_b) = match *l {
                    LayerSpec::Dense { input, output } => (input, input * output, output),
                    LayerSpec::Conv1d {
                        channels_in,
                        filters,
                        kernel,
                        ..
                    } => (channels_in * kernel, filters * channels_in * kernel, filters),
                    _ => (1, 0, 0),
                };
                let bound = (6.0 / fan_in as f64).sqrt();
                LayerParams {
                    weights: (0..n_w).map(|_| rng.gen_range(-bound..bound)).collect(),
                    bias: vec![0.0; n_b],
                }
            })
            .collect();
        Ok(Self {
            version: NETWORK_FORMAT_VERSION,
            spec,
            params,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.weights.len() + p.bias.len()).sum()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.weights.iter().chain(p.bias.iter()).copied())
            .collect()
    }

    fn set_flat_params(&mut self, flat: &[f64]) {
        let mut i = 0;
        for p in &mut self.params {
            for v in p.weights.iter_mut().chain(p.bias.iter_mut()) {
                *v = flat[i];
                i += 1;
            }
        }
    }

    fn run_layer(
        &self,
        idx: usize,
        layer: &LayerSpec,
        x: &[f64],
        shape: Shape,
        train: bool,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let p = &self.params[idx];
        Ok(match *layer {
            LayerSpec::Dense { input, output } => {
                let mut out = p.bias.clone();
                for o in 0..output {
                    let w = &p.weights[o * input..(o + 1) * input];
                    out[o] += w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
                (out, None)
            }
            LayerSpec::Conv1d {
                channels_in,
                kernel,
                stride,
                ..
            } => (conv1d_forward(x, shape.length, &p.weights, &p.bias, channels_in, kernel, stride)?, None),
            LayerSpec::Relu => (x.iter().map(|v| v.max(0.0)).collect(), None),
            LayerSpec::Sigmoid => (x.iter().map(|&v| sigmoid(v)).collect(), None),
            LayerSpec::Dropout { rate } => {
                if train && rate > 0.0 {
                    let r = rng.as_mut().expect("training forward pass needs an rng");
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> =
                        (0..x.len()).map(|_| if r.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
                    (x.iter().zip(&mask).map(|(a, m)| a * m).collect(), Some(mask))
                } else {
                    (x.to_vec(), None)
                }
            }
            LayerSpec::Flatten => (x.to_vec(), None),
        })
    }

    /// Forward pass. Dropout is active only when `rng` is given (training).
    pub fn forward_trace(&self, inputs: &[Vec<f64>], mut rng: Option<&mut ChaCha8Rng>) -> Result<Trace> {
        if inputs.len() != self.spec.branches.len() {
            return Err(Error::Shape {
                layer: "inputs".into(),
                expected: format!("{} branches", self.spec.branches.len()),
                got: format!("{} inputs", inputs.len()),
            });
        }
        let train = rng.is_some();
        let mut activations = Vec::new();
        let mut shapes = Vec::new();
        let mut masks = Vec::new();
        let mut concat = Vec::new();
        let mut idx = 0;
        for (b, x0) in self.spec.branches.iter().zip(inputs) {
            if x0.len() != b.input.size() {
                return Err(Error::Shape {
                    layer: format!("{} input", b.name),
                    expected: format!("{}x{}", b.input.channels, b.input.length),
                    got: format!("{} values", x0.len()),
                });
            }
            let mut x = x0.clone();
            let mut shape = b.input;
            for l in &b.layers {
                let next_shape = layer_output(l, shape, &b.name)?;
                let (y, mask) = self.run_layer(idx, l, &x, shape, train, &mut rng)?;
                activations.push(std::mem::replace(&mut x, y));
                shapes.push(shape);
                masks.push(mask);
                shape = next_shape;
                idx += 1;
            }
            concat.extend(x);
        }
        let mut x = concat;
        let mut shape = Shape::flat(x.len());
        for l in &self.spec.head {
            let next_shape = layer_output(l, shape, "head")?;
            let (y, mask) = self.run_layer(idx, l, &x, shape, train, &mut rng)?;
            activations.push(std::mem::replace(&mut x, y));
            shapes.push(shape);
            masks.push(mask);
            shape = next_shape;
            idx += 1;
        }
        Ok(Trace {
            activations,
            shapes,
            masks,
            output: x,
        })
    }

    /// Eval-mode (dropout-free, deterministic) output.
    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(inputs, None)?.output)
    }

    /// Loss of one example and the gradient of the loss with respect to the
    /// network output pre-activation handled by [`Network::backward`].
    fn output_loss(&self, out: &[f64], target: &[f64], loss: Loss) -> Result<f64> {
        if out.len() != target.len() {
            return Err(Error::Shape {
                layer: "target".into(),
                expected: format!("{} values", out.len()),
                got: format!("{} values", target.len()),
            });
        }
        Ok(match loss {
            Loss::Mse => out.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / out.len() as f64,
            Loss::OrdinalBce => out
                .iter()
                .zip(target)
                .map(|(&p, &y)| {
                    let p = p.clamp(1e-15, 1.0 - 1e-15);
                    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
                })
                .sum(),
        })
    }

    /// Accumulate parameter gradients of one example's loss into `grads`
    /// (same layout as `params`). Returns the loss.
    fn backward(&self, trace: &Trace, target: &[f64], loss: Loss, grads: &mut [LayerParams]) -> Result<f64> {
        let value = self.output_loss(&trace.output, target, loss)?;
        let n_layers = trace.activations.len();
        let all_layers: Vec<&LayerSpec> = self.spec.layers().collect();
        let last = all_layers.last().copied();
        // gradient with respect to the current layer's output
        let mut g: Vec<f64> = match loss {
            Loss::Mse => {
                let m = trace.output.len() as f64;
                trace.output.iter().zip(target).map(|(a, b)| 2.0 * (a - b) / m).collect()
            }
            Loss::OrdinalBce => {
                let p = &trace.output;
                p.iter()
                    .zip(target)
                    .map(|(&p, &y)| {
                        let pc = p.clamp(1e-15, 1.0 - 1e-15);
                        -y / pc + (1.0 - y) / (1.0 - pc)
                    })
                    .collect()
            }
        };
        let mut start = n_layers;
        // sigmoid followed by cross-entropy: use the fused, stable gradient
        if loss == Loss::OrdinalBce && last == Some(&LayerSpec::Sigmoid) {
            g = trace.output.iter().zip(target).map(|(p, y)| p - y).collect();
            start = n_layers - 1;
        }
        // head, then branches in reverse; branch outputs split the concat grad
        let head_start = n_layers - self.spec.head.len();
        let mut idx = start;
        while idx > head_start {
            idx -= 1;
            g = self.layer_backward(idx, all_layers[idx], trace, &g, grads);
        }
        let mut branch_grads = Vec::new();
        let mut offset = 0;
        let (outs, _) = self.spec.shapes()?;
        for o in &outs {
            branch_grads.push(g[offset..offset + o.length].to_vec());
            offset += o.length;
        }
        let mut layer_end = head_start;
        for (b, bg) in self.spec.branches.iter().zip(branch_grads).rev() {
            let first = layer_end - b.layers.len();
            let mut g = bg;
            for idx in (first..layer_end).rev() {
                g = self.layer_backward(idx, all_layers[idx], trace, &g, grads);
            }
            layer_end = first;
        }
        Ok(value)
    }

    fn layer_backward(
        &self,
        idx: usize,
        layer: &LayerSpec,
        trace: &Trace,
        g: &[f64],
        grads: &mut [LayerParams],
    ) -> Vec<f64> {
        let x = &trace.activations[idx];
        let p = &self.params[idx];
        match *layer {
            LayerSpec::Dense { input, output } => {
                let gp = &mut grads[idx];
                let mut gx = vec![0.0; input];
                for o in 0..output {
                    let go = g[o];
                    gp.bias[o] += go;
                    if go == 0.0 {
                        continue;
                    }
                    let w = &p.weights[o * input..(o + 1) * input];
                    let gw = &mut gp.weights[o * input..(o + 1) * input];
                    for i in 0..input {
                        gw[i] += go * x[i];
                        gx[i] += go * w[i];
                    }
                }
                gx
            }
            LayerSpec::Conv1d {
                channels_in,
                filters,
                kernel,
                stride,
            } => {
                let length = trace.shapes[idx].length;
                let out_len = (length - kernel) / stride + 1;
                let gp = &mut grads[idx];
                let mut gx = vec![0.0; x.len()];
                for f in 0..filters {
                    for o in 0..out_len {
                        let go = g[f * out_len + o];
                        gp.bias[f] += go;
                        if go == 0.0 {
                            continue;
                        }
                        for c in 0..channels_in {
                            let wo = (f * channels_in + c) * kernel;
                            let xo = c * length + o * stride;
                            for j in 0..kernel {
                                gp.weights[wo + j] += go * x[xo + j];
                                gx[xo + j] += go * p.weights[wo + j];
                            }
                        }
                    }
                }
                gx
            }
            LayerSpec::Relu => x.iter().zip(g).map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 }).collect(),
            LayerSpec::Sigmoid => x
                .iter()
                .zip(g)
                .map(|(&v, &gv)| {
                    let s = sigmoid(v);
                    gv * s * (1.0 - s)
                })
                .collect(),
            LayerSpec::Dropout { .. } => match &trace.masks[idx] {
                Some(m) => g.iter().zip(m).map(|(a, b)| a * b).collect(),
                None => g.to_vec(),
            },
            LayerSpec::Flatten => g.to_vec(),
        }
    }

    fn zero_grads(&self) -> Vec<LayerParams> {
        self.params
            .iter()
            .map(|p| LayerParams {
                weights: vec![0.0; p.weights.len()],
                bias: vec![0.0; p.bias.len()],
            })
            .collect()
    }

    /// Eval-mode loss of one example and its analytic parameter gradient.
    pub fn loss_and_gradient(&self, sample: &Sample, loss: Loss) -> Result<(f64, Vec<f64>)> {
        let trace = self.forward_trace(&sample.inputs, None)?;
        let mut grads = self.zero_grads();
        let value = self.backward(&trace, &sample.target, loss, &mut grads)?;
        let flat = grads
            .iter()
            .flat_map(|p| p.weights.iter().chain(p.bias.iter()).copied())
            .collect();
        Ok((value, flat))
    }

    pub fn mean_loss(&self, data: &[Sample], loss: Loss) -> Result<f64> {
        let mut total = 0.0;
        for s in data {
            total += self.output_loss(&self.forward(&s.inputs)?, &s.target, loss)?;
        }
        Ok(total / data.len().max(1) as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let net: Self = serde_json::from_str(s)?;
        if net.version != NETWORK_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "network format version {} is not supported (expected {NETWORK_FORMAT_VERSION})",
                net.version
            )));
        }
        net.spec.shapes()?;
        let expected: Vec<usize> = net.spec.layers().map(param_count).collect();
        let got: Vec<usize> = net.params.iter().map(|p| p.weights.len() + p.bias.len()).collect();
        if expected != got {
            return Err(Error::Config("stored weights do not match the network layout".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Minibatch training. Returns the mean training loss of every epoch
/// (accumulated over the epoch's minibatches, dropout active).
pub fn train(net: &mut Network, data: &[Sample], cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut params = net.flat_params();
    let d = params.len();
    let (mut m, mut v) = (vec![0.0; d], vec![0.0; d]);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut step = 0i32;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = net.zero_grads();
            for &i in batch {
                let t = net.forward_trace(&data[i].inputs, Some(&mut rng))?;
                epoch_loss += net.backward(&t, &data[i].target, cfg.loss, &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            let g: Vec<f64> = grads
                .iter()
                .flat_map(|p| p.weights.iter().chain(p.bias.iter()).map(|x| x * scale))
                .collect();
            step += 1;
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for j in 0..d {
                        params[j] -= cfg.learning_rate * g[j];
                    }
                }
                Optimizer::Adam => {
                    let c1 = 1.0 - b1.powi(step);
                    let c2 = 1.0 - b2.powi(step);
                    for j in 0..d {
                        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                        params[j] -= cfg.learning_rate * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                    }
                }
            }
            net.set_flat_params(&params);
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Training { epoch });
        }
        trace.push(mean);
    }
    Ok(trace)
}

/// Largest relative deviation between analytic and central-difference
/// (h = 1e-5) parameter gradients of one example's eval-mode loss. The
/// relative error uses `max(|analytic|, |numeric|, 1e-3)` as denominator:
/// gradients smaller than that are compared on an absolute scale, because
/// the roundoff of a central difference, about `eps * |loss| / h`, would
/// otherwise dominate them.
pub fn gradient_check(net: &Network, sample: &Sample, loss: Loss) -> Result<f64> {
    let (_, analytic) = net.loss_and_gradient(sample, loss)?;
    let base = net.flat_params();
    let mut probe = net.clone();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..base.len() {
        let mut p = base.clone();
        p[j] = base[j] + h;
        probe.set_flat_params(&p);
        let up = probe.output_loss(&probe.forward(&sample.inputs)?, &sample.target, loss)?;
        p[j] = base[j] - h;
        probe.set_flat_params(&p);
        let dn = probe.output_loss(&probe.forward(&sample.inputs)?, &sample.target, loss)?;
        let numeric = (up - dn) / (2.0 * h);
        let denom = analytic[j].abs().max(numeric.abs()).max(1e-3);
        worst = worst.max((analytic[j] - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Cumulative code of a peak slot: ones up to and including `ip`.
pub fn ordinal_encode(ip: usize, slots: usize) -> Result<Vec<f64>> {
    if ip >= slots {
        return Err(Error::Domain {
            value: ip as f64,
            min: 0.0,
            max: (slots - 1) as f64,
        });
    }
    Ok((0..slots).map(|j| if j <= ip { 1.0 } else { 0.0 }).collect())
}

/// Slot from cumulative sigmoid outputs: the number of outputs above 0.5,
/// minus one, clamped to the valid range.
pub fn ordinal_decode(outputs: &[f64]) -> usize {
    let count = outputs.iter().filter(|&&v| v > 0.5).count();
    count.saturating_sub(1).min(outputs.len().saturating_sub(1))
}

#[cfg(test)]
mod tests;
