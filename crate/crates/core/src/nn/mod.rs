//! Small CPU neural-network toolkit: convolutions, pooling, dense layers,
//! softmax cross-entropy, Adam and a sequential container.

mod conv;
mod gemm;
mod layers;
mod optim;
mod tensor;

pub use conv::{Conv1d, Conv2d, ConvGrads, FilterBank};
pub use layers::{argmax, softmax, softmax_xent, softmax_xent_grad, Dense, Layer, LayerGrads};
pub use optim::{Adam, AdamConfig, StepDecay};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// An ordered stack of layers mapping one input tensor to class logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequential {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl Sequential {
    /// Builds the stack and checks that every layer accepts the shape the
    /// previous one produces.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        ensure!(!layers.is_empty(), "a network needs at least one layer");
        let net = Self {
            input_shape,
            layers,
        };
        net.shapes()?;
        Ok(net)
    }

    /// Checks every layer's parameters and the shape chain.
    pub fn validate(&self) -> Result<()> {
        for layer in &self.layers {
            layer.validate()?;
        }
        self.shapes().map(|_| ())
    }

    /// Input shape followed by every layer's output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_len(&self) -> Result<usize> {
        Ok(self.shapes()?.last().unwrap().iter().product())
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| l.params().into_iter().map(<[f64]>::len))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ensure!(
            x.shape() == self.input_shape.as_slice(),
            "network expects input {:?}, got {:?}",
            self.input_shape,
            x.shape()
        );
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Forward pass keeping every intermediate activation; element 0 is the
    /// input and the last element is the output.
    pub fn forward_trace(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        ensure!(
            x.shape() == self.input_shape.as_slice(),
            "network expects input {:?}, got {:?}",
            self.input_shape,
            x.shape()
        );
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(trace.last().unwrap())?;
            trace.push(next);
        }
        Ok(trace)
    }

    /// Backpropagates `grad_out` through a trace from [`forward_trace`],
    /// returning parameter gradients in [`params_mut`] order.
    ///
    /// [`forward_trace`]: Sequential::forward_trace
    /// [`params_mut`]: Sequential::params_mut
    pub fn backward(&self, trace: &[Tensor], grad_out: Tensor) -> Result<Vec<Vec<f64>>> {
        ensure!(
            trace.len() == self.layers.len() + 1,
            "trace has {} activations, expected {}",
            trace.len(),
            self.layers.len() + 1
        );
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut grad = grad_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let g = layer.backward(&trace[i], &grad, i > 0)?;
            per_layer.push(g.params);
            if let Some(gx) = g.input {
                grad = gx;
            }
        }
        per_layer.reverse();
        Ok(per_layer.into_iter().flatten().collect())
    }

    /// Loss and parameter gradients for one labelled example.
    pub fn loss_and_grads(&self, x: &Tensor, label: usize) -> Result<(f64, Vec<Vec<f64>>)> {
        let trace = self.forward_trace(x)?;
        let logits = trace.last().unwrap();
        let (loss, probs) = softmax_xent(logits.data(), label)?;
        let g = Tensor::new(logits.shape().to_vec(), softmax_xent_grad(&probs, label))?;
        Ok((loss, self.backward(&trace, g)?))
    }

    /// Class probabilities for one input.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(softmax(self.forward(x)?.data()))
    }

    /// The first 1-D convolution in the stack, if any.
    pub fn first_conv1d(&self) -> Option<&Conv1d> {
        self.layers.iter().find_map(|l| match l {
            Layer::Conv1d(c) => Some(c),
            _ => None,
        })
    }
}
