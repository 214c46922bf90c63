//! Differentiable building blocks: autograd graph, feed-forward stacks, the
//! gated recurrent cell, Adam, target-network EMA and gradient checking.

mod adam;
mod graph;
mod gradcheck;
mod gru;
mod layers;
mod params;

pub use adam::Adam;
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use gru::{gru_unroll, GatedRecurrentCellSpec, GruCell};
pub use layers::{Activation, FeedForwardSpec, Mlp};
pub use params::{ema_update, ParameterSet};

/// Mean over batch and columns of the squared difference.
pub fn mse<T: crate::Scalar>(g: &mut Graph<T>, pred: Var, target: Var) -> Var {
    let d = g.sub(pred, target);
    let sq = g.square(d);
    g.mean(sq)
}
