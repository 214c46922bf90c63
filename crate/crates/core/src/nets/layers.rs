use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::ParameterSet;
use crate::error::{check_dim, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, g: &mut Graph<T>, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
            Activation::Identity => x,
        }
    }
}

/// Layout of a fully connected stack. `num_hidden_layers` counts hidden
/// layers, so the stack has `num_hidden_layers + 1` affine maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub nonlinearity: Activation,
    pub output_activation: Activation,
}

impl FeedForwardSpec {
    pub fn new(input_dim: usize, output_dim: usize, hidden_size: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            hidden_size,
            num_hidden_layers: 2,
            nonlinearity: Activation::Relu,
            output_activation: Activation::Identity,
        }
    }

    pub fn with_hidden_layers(mut self, n: usize) -> Self {
        self.num_hidden_layers = n;
        self
    }

    pub fn with_output_activation(mut self, act: Activation) -> Self {
        self.output_activation = act;
        self
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.num_hidden_layers + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.num_hidden_layers {
            dims.push((fan_in, self.hidden_size));
            fan_in = self.hidden_size;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }
}

/// Feed-forward network layout; parameters live in a [`ParameterSet`] owned
/// by the caller, laid out as `[w0, b0, w1, b1, ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: FeedForwardSpec,
}

impl Mlp {
    pub fn new(spec: FeedForwardSpec) -> Self {
        assert!(spec.input_dim > 0 && spec.output_dim > 0 && spec.hidden_size > 0);
        Self { spec }
    }

    pub fn spec(&self) -> &FeedForwardSpec {
        &self.spec
    }

    pub fn num_tensors(&self) -> usize {
        2 * (self.spec.num_hidden_layers + 1)
    }

    /// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, prefix: &str, rng: &mut R) -> ParameterSet<T> {
        let mut params = ParameterSet::new();
        for (i, (fan_in, fan_out)) in self.spec.layer_dims().into_iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.push(
                format!("{prefix}.l{i}.weight"),
                uniform(rng, (fan_in, fan_out), bound),
            );
            params.push(format!("{prefix}.l{i}.bias"), uniform(rng, (1, fan_out), bound));
        }
        params
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], x: Var) -> Var {
        debug_assert_eq!(params.len(), self.num_tensors());
        let last = self.spec.num_hidden_layers;
        let mut h = x;
        for layer in 0..=last {
            let z = g.matmul(h, params[2 * layer]);
            let z = g.add_row(z, params[2 * layer + 1]);
            h = if layer == last {
                self.spec.output_activation.apply(g, z)
            } else {
                self.spec.nonlinearity.apply(g, z)
            };
        }
        h
    }

    /// Forward pass on plain data, no gradients.
    pub fn eval<T: Scalar>(&self, params: &ParameterSet<T>, x: &Array2<T>) -> Result<Array2<T>> {
        check_dim("network input", self.spec.input_dim, x.ncols())?;
        let mut g = Graph::new();
        let bound = g.bind(params, false);
        let xv = g.constant(x.clone());
        let y = self.forward(&mut g, &bound, xv);
        Ok(g.value(y).clone())
    }
}

pub(crate) fn uniform<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    shape: (usize, usize),
    bound: f64,
) -> Array2<T> {
    Array2::from_shape_simple_fn(shape, || T::lit(rng.random_range(-bound..bound)))
}
