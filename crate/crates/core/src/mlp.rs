//! Fully connected feature extractor with hand-written backprop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{linear_backward, linear_forward, DenseMatrix};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v < 0.0 {
                    0.0
                } else {
                    v
                }
            }
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and the output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DenseMatrix,
    pub bias: DenseMatrix,
}

/// Affine layers with an activation after every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpState {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer (layer 0 gets the raw input).
    inputs: Vec<DenseMatrix>,
    /// Pre-activations of the hidden layers.
    pre: Vec<DenseMatrix>,
    widths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub input: DenseMatrix,
    pub layers: Vec<Layer>,
}

impl MlpState {
    /// Glorot-uniform weights and zero biases for widths `[d_in, h.., d_out]`.
    pub fn new(widths: &[usize], activation: Activation, rng: &mut SeededRng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Argument(format!(
                "layer widths need at least input and output and no zeros, got {widths:?}"
            )));
        }
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    weights: DenseMatrix::uniform(w[0], w[1], -bound, bound, rng),
                    bias: DenseMatrix::zeros(1, w[1]),
                }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("an MLP needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            l.bias.ensure_shape("MlpState", 1, l.weights.cols())?;
            if i > 0 && layers[i - 1].weights.cols() != l.weights.rows() {
                return Err(Error::Argument(format!(
                    "layer {i} expects {} inputs, previous layer yields {}",
                    l.weights.rows(),
                    layers[i - 1].weights.cols()
                )));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].weights.rows()];
        w.extend(self.layers.iter().map(|l| l.weights.cols()));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.cols())
    }

    pub fn forward(&self, inputs: &DenseMatrix) -> Result<(DenseMatrix, MlpCache)> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len().saturating_sub(1)),
            widths: self.widths(),
        };
        let mut h = inputs.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = linear_forward(&h, &layer.weights, &layer.bias)?;
            cache.inputs.push(h);
            if i == last {
                return Ok((z, cache));
            }
            h = z.map(|v| self.activation.apply(v));
            cache.pre.push(z);
        }
        unreachable!("at least one layer")
    }

    /// Forward pass without keeping intermediates.
    pub fn features(&self, inputs: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward(inputs)?.0)
    }

    pub fn backward(&self, grad_out: &DenseMatrix, cache: &MlpCache) -> Result<MlpGradients> {
        if cache.widths != self.widths() || cache.inputs.len() != self.layers.len() {
            return Err(Error::Contract("MLP cache does not belong to this network".into()));
        }
        let rows = cache.inputs[0].rows();
        if grad_out.shape() != (rows, self.output_dim()) {
            return Err(Error::Contract(format!(
                "upstream gradient {}x{} does not match cached batch {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                rows,
                self.output_dim()
            )));
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let (d_in, d_w, d_b) = linear_backward(&cache.inputs[i], &self.layers[i].weights, &upstream)?;
            grads.push(Layer {
                weights: d_w,
                bias: d_b,
            });
            upstream = if i > 0 {
                let z = &cache.pre[i - 1];
                let a = &cache.inputs[i];
                let mut d = d_in;
                for ((g, &zv), &av) in d.as_mut_slice().iter_mut().zip(z.as_slice()).zip(a.as_slice()) {
                    *g *= self.activation.derivative(zv, av);
                }
                d
            } else {
                d_in
            };
        }
        grads.reverse();
        Ok(MlpGradients {
            input: upstream,
            layers: grads,
        })
    }

    pub fn params(&self) -> Vec<&DenseMatrix> {
        self.layers.iter().flat_map(|l| [&l.weights, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }
}

impl MlpGradients {
    /// Parameter gradients in [`MlpState::params`] order.
    pub fn into_params(self) -> Vec<DenseMatrix> {
        self.layers.into_iter().flat_map(|l| [l.weights, l.bias]).collect()
    }
}
