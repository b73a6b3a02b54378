use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{Conv1d, Conv2d};
use super::gemm::{gemm, MatRef};
use super::Tensor;
use crate::error::{ensure, Result};

/// Fully connected layer `y = W x + b` over a flat input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `[outputs][inputs]`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        ensure!(
            inputs >= 1 && outputs >= 1,
            "dense dimensions must be positive"
        );
        ensure!(
            weights.len() == inputs * outputs,
            "dense weight count mismatch"
        );
        ensure!(biases.len() == outputs, "dense bias count mismatch");
        Ok(Self {
            inputs,
            outputs,
            weights,
            biases,
        })
    }

    pub fn init(rng: &mut impl Rng, inputs: usize, outputs: usize) -> Result<Self> {
        let bound = (1.0 / inputs as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self::new(inputs, outputs, weights, vec![0.0; outputs])
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        ensure!(
            x.len() == self.inputs,
            "dense expects {} inputs, got {:?}",
            self.inputs,
            x.shape()
        );
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let mut out = self.biases.clone();
        gemm(
            MatRef::row_major(&self.weights, self.outputs, self.inputs),
            MatRef::row_major(x.data(), self.inputs, 1),
            1.0,
            &mut out,
        );
        Tensor::from_signal(&out).reshape(vec![self.outputs])
    }
}

/// Index of the first maximum in each disjoint window of `size`.
fn window_argmax(values: &[f64], size: usize) -> impl Iterator<Item = usize> + '_ {
    values
        .chunks_exact(size)
        .enumerate()
        .map(move |(w, chunk)| {
            let mut best = 0;
            for (i, &v) in chunk.iter().enumerate().skip(1) {
                if v > chunk[best] {
                    best = i;
                }
            }
            w * size + best
        })
}

/// The layer kinds a [`Sequential`] stack is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv1d(Conv1d),
    Conv2d(Conv2d),
    Relu,
    /// Disjoint windows along the last axis of `[C × L]`; a trailing
    /// partial window is dropped.
    MaxPool1d {
        size: usize,
    },
    /// Disjoint `size × size` windows of `[C × H × W]`.
    MaxPool2d {
        size: usize,
    },
    Flatten,
    Dense(Dense),
}

/// Gradients for one layer: the input gradient (when requested) and one
/// buffer per parameter tensor, in [`Layer::params`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub input: Option<Tensor>,
    pub params: Vec<Vec<f64>>,
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool1d { .. } => "maxpool1d",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv1d(c) => {
                ensure!(
                    input.len() == 2 && input[0] == c.in_channels,
                    "conv1d expects [{} × L], got {input:?}",
                    c.in_channels
                );
                Ok(vec![c.out_channels, c.out_len(input[1])?])
            }
            Layer::Conv2d(c) => {
                ensure!(
                    input.len() == 3 && input[0] == c.in_channels,
                    "conv2d expects [{} × H × W], got {input:?}",
                    c.in_channels
                );
                let (h, w) = c.out_hw(input[1], input[2])?;
                Ok(vec![c.out_channels, h, w])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::MaxPool1d { size } => {
                ensure!(input.len() == 2, "maxpool1d expects [C × L], got {input:?}");
                ensure!(
                    *size >= 1 && input[1] >= *size,
                    "maxpool1d window {size} exceeds length {}",
                    input[1]
                );
                Ok(vec![input[0], input[1] / size])
            }
            Layer::MaxPool2d { size } => {
                ensure!(
                    input.len() == 3,
                    "maxpool2d expects [C × H × W], got {input:?}"
                );
                ensure!(
                    *size >= 1 && input[1] >= *size && input[2] >= *size,
                    "maxpool2d window {size} exceeds {}×{}",
                    input[1],
                    input[2]
                );
                Ok(vec![input[0], input[1] / size, input[2] / size])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Dense(d) => {
                let n: usize = input.iter().product();
                ensure!(
                    n == d.inputs,
                    "dense expects {} inputs, got {input:?}",
                    d.inputs
                );
                Ok(vec![d.outputs])
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv1d(c) => c.forward(x),
            Layer::Conv2d(c) => c.forward(x),
            Layer::Relu => Tensor::new(
                x.shape().to_vec(),
                x.data().iter().map(|v| v.max(0.0)).collect(),
            ),
            Layer::MaxPool1d { size } => {
                let shape = self.output_shape(x.shape())?;
                let (len, out_len) = (x.shape()[1], shape[1]);
                let mut out = Vec::with_capacity(shape[0] * out_len);
                for chan in x.data().chunks_exact(len) {
                    let chan = &chan[..out_len * size];
                    out.extend(window_argmax(chan, *size).map(|i| chan[i]));
                }
                Tensor::new(shape, out)
            }
            Layer::MaxPool2d { size } => {
                let shape = self.output_shape(x.shape())?;
                let idx = pool2d_argmax(x, *size, &shape);
                Tensor::new(shape, idx.into_iter().map(|i| x.data()[i]).collect())
            }
            Layer::Flatten => x.clone().reshape(vec![x.len()]),
            Layer::Dense(d) => d.forward(x),
        }
    }

    /// Backward pass given the layer input `x` and upstream gradient.
    pub fn backward(
        &self,
        x: &Tensor,
        grad_out: &Tensor,
        need_input_grad: bool,
    ) -> Result<LayerGrads> {
        let out_shape = self.output_shape(x.shape())?;
        ensure!(
            grad_out.shape() == out_shape.as_slice(),
            "{} grad shape {:?} does not match output {out_shape:?}",
            self.name(),
            grad_out.shape()
        );
        let (input, params) = match self {
            Layer::Conv1d(c) => {
                let g = c.backward(x, grad_out, need_input_grad)?;
                (g.input, vec![g.weights, g.biases])
            }
            Layer::Conv2d(c) => {
                let g = c.backward(x, grad_out, need_input_grad)?;
                (g.input, vec![g.weights, g.biases])
            }
            Layer::Relu => {
                let gx = x
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                (Some(Tensor::new(x.shape().to_vec(), gx)?), vec![])
            }
            Layer::MaxPool1d { size } => {
                let (len, out_len) = (x.shape()[1], out_shape[1]);
                let mut gx = vec![0.0; x.len()];
                for (c, chan) in x.data().chunks_exact(len).enumerate() {
                    let g = &grad_out.data()[c * out_len..(c + 1) * out_len];
                    for (w, i) in window_argmax(&chan[..out_len * size], *size).enumerate() {
                        gx[c * len + i] += g[w];
                    }
                }
                (Some(Tensor::new(x.shape().to_vec(), gx)?), vec![])
            }
            Layer::MaxPool2d { size } => {
                let mut gx = vec![0.0; x.len()];
                for (o, i) in pool2d_argmax(x, *size, &out_shape).into_iter().enumerate() {
                    gx[i] += grad_out.data()[o];
                }
                (Some(Tensor::new(x.shape().to_vec(), gx)?), vec![])
            }
            Layer::Flatten => (Some(grad_out.clone().reshape(x.shape().to_vec())?), vec![]),
            Layer::Dense(d) => {
                d.check(x)?;
                let g = grad_out.data();
                let mut gw = vec![0.0; d.weights.len()];
                gemm(
                    MatRef::row_major(g, d.outputs, 1),
                    MatRef::row_major(x.data(), 1, d.inputs),
                    0.0,
                    &mut gw,
                );
                let gx = if need_input_grad {
                    let mut gx = vec![0.0; d.inputs];
                    gemm(
                        MatRef::row_major(&d.weights, d.outputs, d.inputs).t(),
                        MatRef::row_major(g, d.outputs, 1),
                        0.0,
                        &mut gx,
                    );
                    Some(Tensor::new(x.shape().to_vec(), gx)?)
                } else {
                    None
                };
                (gx, vec![gw, g.to_vec()])
            }
        };
        Ok(LayerGrads {
            input: if need_input_grad { input } else { None },
            params,
        })
    }

    /// Re-checks parameter counts, e.g. after deserialisation.
    pub fn validate(&self) -> Result<()> {
        match self {
            Layer::Conv1d(c) => {
                Conv1d::new(
                    c.in_channels,
                    c.out_channels,
                    c.kernel,
                    c.stride,
                    c.weights.clone(),
                    c.biases.clone(),
                )?;
            }
            Layer::Conv2d(c) => {
                Conv2d::new(
                    c.in_channels,
                    c.out_channels,
                    c.kernel_h,
                    c.kernel_w,
                    c.stride,
                    c.padding,
                    c.weights.clone(),
                    c.biases.clone(),
                )?;
            }
            Layer::Dense(d) => {
                Dense::new(d.inputs, d.outputs, d.weights.clone(), d.biases.clone())?;
            }
            _ => {}
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Conv1d(c) => vec![&c.weights, &c.biases],
            Layer::Conv2d(c) => vec![&c.weights, &c.biases],
            Layer::Dense(d) => vec![&d.weights, &d.biases],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Conv1d(c) => vec![&mut c.weights, &mut c.biases],
            Layer::Conv2d(c) => vec![&mut c.weights, &mut c.biases],
            Layer::Dense(d) => vec![&mut d.weights, &mut d.biases],
            _ => vec![],
        }
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

fn pool2d_argmax(x: &Tensor, size: usize, out_shape: &[usize]) -> Vec<usize> {
    let (h, w) = (x.shape()[1], x.shape()[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let data = x.data();
    let mut idx = Vec::with_capacity(out_shape[0] * oh * ow);
    for c in 0..out_shape[0] {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (c * h + oy * size) * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = (c * h + oy * size + dy) * w + ox * size + dx;
                        if data[i] > data[best] {
                            best = i;
                        }
                    }
                }
                idx.push(best);
            }
        }
    }
    idx
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against `label`: returns the loss and
/// the probability vector. The logit gradient is `probs - onehot(label)`.
pub fn softmax_xent(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    ensure!(
        label < logits.len(),
        "label {label} out of range for {} classes",
        logits.len()
    );
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    let loss = log_sum - logits[label];
    Ok((loss, softmax(logits)))
}

pub fn softmax_xent_grad(probs: &[f64], label: usize) -> Vec<f64> {
    let mut g = probs.to_vec();
    g[label] -= 1.0;
    g
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
