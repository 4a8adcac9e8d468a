//! Minimal f64 feed-forward networks with hand-written backpropagation.
//!
//! A [`Network`] is a chain of [`Layer`]s over single samples of shape
//! `[channels, height, width]` (vectors are `[n, 1, 1]`). All trainable
//! parameters live in one flat vector, each layer's weights followed by its
//! bias, which keeps optimizers, serialization and gradient checks trivial.

mod layers;
mod optim;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use optim::{Optimizer, OptimizerKind};

/// `[channels, height, width]`.
pub type Shape = [usize; 3];

fn volume(s: Shape) -> usize {
    s[0] * s[1] * s[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Linear {
        inputs: usize,
        outputs: usize,
    },
    LeakyRelu {
        slope: f64,
    },
    Tanh,
    Sigmoid,
    /// Reinterprets the values under a new shape of equal volume.
    Reshape {
        shape: Shape,
    },
}

impl Layer {
    fn output_shape(&self, input: Shape) -> Result<Shape> {
        let bad = |why: String| Err(Error::contract(format!("{self:?} on input {input:?}: {why}")));
        match *self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if input[0] != in_channels || kernel == 0 || stride == 0 {
                    return bad("channel or kernel mismatch".into());
                }
                let (h, w) = (input[1] + 2 * padding, input[2] + 2 * padding);
                if h < kernel || w < kernel {
                    return bad("kernel larger than padded input".into());
                }
                Ok([out_channels, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
            }
            Layer::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if input[0] != in_channels || kernel == 0 || stride == 0 {
                    return bad("channel or kernel mismatch".into());
                }
                let grow = |n: usize| ((n - 1) * stride + kernel).checked_sub(2 * padding).filter(|&m| m > 0);
                match (grow(input[1]), grow(input[2])) {
                    (Some(h), Some(w)) => Ok([out_channels, h, w]),
                    _ => bad("padding consumes the output".into()),
                }
            }
            Layer::Linear { inputs, outputs } => {
                if volume(input) != inputs {
                    return bad(format!("expected {inputs} values"));
                }
                Ok([outputs, 1, 1])
            }
            Layer::Reshape { shape } => {
                if volume(shape) != volume(input) {
                    return bad("volume changes".into());
                }
                Ok(shape)
            }
            Layer::LeakyRelu { .. } | Layer::Tanh | Layer::Sigmoid => Ok(input),
        }
    }

    /// `(weights, biases)` counts.
    fn param_counts(&self) -> (usize, usize) {
        match *self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            }
            | Layer::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (in_channels * out_channels * kernel * kernel, out_channels),
            Layer::Linear { inputs, outputs } => (inputs * outputs, outputs),
            _ => (0, 0),
        }
    }

    /// Inputs feeding each output unit, for initialization.
    fn fan_in(&self) -> usize {
        match *self {
            Layer::Conv2d {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
            // each output pixel sees about kernel²/stride² taps per input channel
            Layer::ConvTranspose2d {
                in_channels,
                kernel,
                stride,
                ..
            } => (in_channels * kernel * kernel / (stride * stride)).max(1),
            Layer::Linear { inputs, .. } => inputs,
            _ => 1,
        }
    }
}

/// Architecture of one network: input shape plus its layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Shape,
    pub layers: Vec<Layer>,
}

/// A network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    /// `shapes[k]` is the input of layer `k`; the last entry is the output.
    shapes: Vec<Shape>,
    /// Start of each layer's parameters in `params`.
    offsets: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations recorded by [`Network::forward_trace`] for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `values[k]` is the input of layer `k`; the last entry is the output.
    pub values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace holds at least the input")
    }
}

impl Network {
    /// Validates the layer chain; parameters start at zero.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        if volume(spec.input_shape) == 0 {
            return Err(Error::contract("network input has zero volume"));
        }
        let mut shapes = vec![spec.input_shape];
        let mut offsets = Vec::with_capacity(spec.layers.len());
        let mut total = 0;
        for layer in &spec.layers {
            let next = layer.output_shape(*shapes.last().unwrap())?;
            shapes.push(next);
            offsets.push(total);
            let (w, b) = layer.param_counts();
            total += w + b;
        }
        Ok(Network {
            spec,
            shapes,
            offsets,
            params: vec![0.0; total],
        })
    }

    /// Builds the network with the given flat parameters.
    pub fn with_params(spec: NetworkSpec, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::new(spec)?;
        if params.len() != net.params.len() {
            return Err(Error::contract(format!(
                "{} parameters for a network that needs {}",
                params.len(),
                net.params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> Shape {
        self.spec.input_shape
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().unwrap()
    }

    pub fn input_len(&self) -> usize {
        volume(self.input_shape())
    }

    pub fn output_len(&self) -> usize {
        volume(self.output_shape())
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameter range `(weights, biases)` of layer `k`.
    pub fn layer_params(&self, k: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (w, b) = self.spec.layers[k].param_counts();
        let o = self.offsets[k];
        (o..o + w, o + w..o + w + b)
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init_uniform(&mut self, rng: &mut impl Rng) {
        for k in 0..self.spec.layers.len() {
            let bound = 1.0 / (self.spec.layers[k].fan_in() as f64).sqrt();
            let (w, b) = self.layer_params(k);
            for p in &mut self.params[w] {
                *p = rng.random_range(-bound..bound);
            }
            self.params[b].fill(0.0);
        }
    }

    /// Rounds every parameter to `f32`, the stored precision.
    pub fn snap_to_f32(&mut self) {
        for p in &mut self.params {
            *p = *p as f32 as f64;
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::contract(format!(
                "input of {} values, network expects {:?}",
                x.len(),
                self.input_shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for (k, layer) in self.spec.layers.iter().enumerate() {
            cur = layers::forward(layer, self.shapes[k], &self.params[self.offsets[k]..], &cur);
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut values = Vec::with_capacity(self.spec.layers.len() + 1);
        values.push(x.to_vec());
        for (k, layer) in self.spec.layers.iter().enumerate() {
            let next = layers::forward(layer, self.shapes[k], &self.params[self.offsets[k]..], &values[k]);
            values.push(next);
        }
        Ok(Trace { values })
    }

    /// Backpropagates `grad_out` (d loss / d output) through a recorded
    /// forward pass. Parameter gradients are added into `grad_params`; the
    /// gradient with respect to the input is returned.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grad_params: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad_out.len(), self.output_len());
        assert_eq!(grad_params.len(), self.params.len());
        let mut g = grad_out.to_vec();
        for (k, layer) in self.spec.layers.iter().enumerate().rev() {
            let o = self.offsets[k];
            g = layers::backward(
                layer,
                self.shapes[k],
                self.shapes[k + 1],
                &self.params[o..],
                &trace.values[k],
                &trace.values[k + 1],
                &g,
                &mut grad_params[o..],
            );
        }
        g
    }
}
