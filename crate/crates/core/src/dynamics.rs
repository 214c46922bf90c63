//! One-step dynamics model `m(s, a) -> s'` with an EMA target copy.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, SrlError};
use crate::nets::{ema_update, mse, Adam, FeedForwardSpec, Graph, Mlp, ParameterSet, Var};
use crate::scalar::Scalar;
use crate::transition::Batch;

/// Running per-dimension mean and standard deviation (Welford, in `f64`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningNormalizer {
    pub enabled: bool,
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningNormalizer {
    const MIN_STD: f64 = 1e-4;

    pub fn new(dim: usize, enabled: bool) -> Self {
        Self {
            enabled,
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) {
        if !self.enabled {
            return;
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Center used for normalization; zero when disabled.
    pub fn center(&self) -> Vec<f64> {
        if self.enabled {
            self.mean.clone()
        } else {
            vec![0.0; self.dim()]
        }
    }

    /// Scale used for normalization; one when disabled or with fewer than two samples.
    pub fn scale(&self) -> Vec<f64> {
        if !self.enabled || self.count < 2 {
            return vec![1.0; self.dim()];
        }
        self.m2
            .iter()
            .map(|s| (s / self.count as f64).sqrt().max(Self::MIN_STD))
            .collect()
    }
}

/// Frozen normalization constants as graph rows.
struct NormRows<T> {
    in_center: Vec<T>,
    in_inv_scale: Vec<T>,
    out_center: Vec<T>,
    out_scale: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct DynamicsModel<T> {
    mlp: Mlp,
    state_dim: usize,
    action_dim: usize,
    predict_delta: bool,
    pub params: ParameterSet<T>,
    pub target: ParameterSet<T>,
    /// Statistics of model input states.
    pub input_norm: RunningNormalizer,
    /// Statistics of the regression target (next state, or delta).
    pub output_norm: RunningNormalizer,
}

impl<T: Scalar> DynamicsModel<T> {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden_size: usize,
        num_hidden_layers: usize,
        predict_delta: bool,
        normalize: bool,
        rng: &mut R,
    ) -> Self {
        let spec = FeedForwardSpec::new(state_dim + action_dim, state_dim, hidden_size)
            .with_hidden_layers(num_hidden_layers);
        Self::from_spec(spec, state_dim, action_dim, predict_delta, normalize, rng)
    }

    pub fn from_spec<R: Rng + ?Sized>(
        spec: FeedForwardSpec,
        state_dim: usize,
        action_dim: usize,
        predict_delta: bool,
        normalize: bool,
        rng: &mut R,
    ) -> Self {
        assert_eq!(spec.input_dim, state_dim + action_dim);
        assert_eq!(spec.output_dim, state_dim);
        let mlp = Mlp::new(spec);
        let params = mlp.init("model", rng);
        Self {
            mlp,
            state_dim,
            action_dim,
            predict_delta,
            target: params.clone(),
            params,
            input_norm: RunningNormalizer::new(state_dim, normalize),
            output_norm: RunningNormalizer::new(state_dim, normalize),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn predicts_delta(&self) -> bool {
        self.predict_delta
    }

    pub fn network(&self) -> &Mlp {
        &self.mlp
    }

    /// Folds one real transition into the normalization statistics.
    pub fn observe(&mut self, state: &[f64], next_state: &[f64]) {
        self.input_norm.update(state);
        if self.predict_delta {
            let d: Vec<f64> = next_state.iter().zip(state).map(|(a, b)| a - b).collect();
            self.output_norm.update(&d);
        } else {
            self.output_norm.update(next_state);
        }
    }

    fn norm_rows(&self) -> NormRows<T> {
        let conv = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
        NormRows {
            in_center: conv(self.input_norm.center()),
            in_inv_scale: conv(self.input_norm.scale().iter().map(|s| 1.0 / s).collect()),
            out_center: conv(self.output_norm.center()),
            out_scale: conv(self.output_norm.scale()),
        }
    }

    fn normalized_input(&self, g: &mut Graph<T>, rows: &NormRows<T>, s: Var, a: Var) -> Var {
        let c = g.row_constant(&rows.in_center);
        let k = g.row_constant(&rows.in_inv_scale);
        let z = g.sub_row(s, c);
        let z = g.mul_row(z, k);
        g.concat_cols(&[z, a])
    }

    /// Differentiable prediction in raw state units. `params` are bound
    /// leaves of either the online or the target set.
    pub fn forward(&self, g: &mut Graph<T>, params: &[Var], s: Var, a: Var) -> Var {
        let rows = self.norm_rows();
        self.forward_with(g, &rows, params, s, a)
    }

    fn forward_with(&self, g: &mut Graph<T>, rows: &NormRows<T>, params: &[Var], s: Var, a: Var) -> Var {
        let x = self.normalized_input(g, rows, s, a);
        let y = self.mlp.forward(g, params, x);
        let k = g.row_constant(&rows.out_scale);
        let c = g.row_constant(&rows.out_center);
        let y = g.mul_row(y, k);
        let y = g.add_row(y, c);
        if self.predict_delta {
            g.add(y, s)
        } else {
            y
        }
    }

    /// Batched prediction with an arbitrary parameter set.
    pub fn predict_with(&self, params: &ParameterSet<T>, states: &Array2<T>, actions: &Array2<T>) -> Result<Array2<T>> {
        check_dim("model state input", self.state_dim, states.ncols())?;
        check_dim("model action input", self.action_dim, actions.ncols())?;
        if states.iter().chain(actions.iter()).any(|v| !v.is_finite()) {
            return Err(SrlError::NonFinite("model input".into()));
        }
        let mut g = Graph::new();
        let p = g.bind(params, false);
        let s = g.constant(states.clone());
        let a = g.constant(actions.clone());
        let y = self.forward(&mut g, &p, s, a);
        Ok(g.value(y).clone())
    }

    /// Next-state prediction from the online parameters.
    pub fn predict(&self, state: &[T], action: &[T]) -> Result<Vec<T>> {
        let s = Array2::from_shape_vec((1, state.len()), state.to_vec()).unwrap();
        let a = Array2::from_shape_vec((1, action.len()), action.to_vec()).unwrap();
        Ok(self.predict_with(&self.params, &s, &a)?.iter().copied().collect())
    }

    /// Mean squared one-step error in raw state units, online parameters.
    pub fn model_loss(&self, batch: &Batch<T>) -> Result<T> {
        if batch.is_empty() {
            return Err(SrlError::InvalidArgument("model_loss on an empty batch".into()));
        }
        let pred = self.predict_with(&self.params, &batch.states, &batch.actions)?;
        Ok(prediction_mse(&pred, &batch.next_states))
    }

    /// Training objective and gradients w.r.t. the online parameters. The
    /// squared error is measured in normalized target units.
    pub fn loss_and_grads(&self, params: &ParameterSet<T>, batch: &Batch<T>) -> Result<(T, Vec<Array2<T>>)> {
        check_dim("model state input", self.state_dim, batch.states.ncols())?;
        check_dim("model action input", self.action_dim, batch.actions.ncols())?;
        let rows = self.norm_rows();
        let mut g = Graph::new();
        let p = g.bind(params, true);
        let s = g.constant(batch.states.clone());
        let a = g.constant(batch.actions.clone());
        let x = self.normalized_input(&mut g, &rows, s, a);
        let y = self.mlp.forward(&mut g, &p, x);
        // Normalized regression target.
        let mut target = batch.next_states.clone();
        if self.predict_delta {
            target -= &batch.states;
        }
        for (j, mut col) in target.columns_mut().into_iter().enumerate() {
            let (c, k) = (rows.out_center[j], rows.out_scale[j]);
            col.mapv_inplace(|v| (v - c) / k);
        }
        let t = g.constant(target);
        let loss = mse(&mut g, y, t);
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(SrlError::NonFinite("model loss".into()));
        }
        let grads = g.backward(loss).collect(&g, &p);
        Ok((value, grads))
    }

    /// One optimizer step on the online parameters. Returns the loss.
    pub fn update(&mut self, opt: &mut Adam<T>, batch: &Batch<T>) -> Result<T> {
        let (loss, grads) = self.loss_and_grads(&self.params, batch)?;
        opt.step(&mut self.params, &grads);
        Ok(loss)
    }

    pub fn update_target(&mut self, tau: T) -> Result<()> {
        ema_update(&mut self.target, &self.params, tau)
    }

    /// Imagined states `s_1..s_J` from the TARGET parameters, one model
    /// evaluation per action.
    pub fn rollout(&self, s0: &[T], actions: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        self.rollout_with(&self.target, s0, actions)
    }

    pub fn rollout_with(&self, params: &ParameterSet<T>, s0: &[T], actions: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        if actions.is_empty() {
            return Err(SrlError::InvalidArgument("rollout needs at least one action".into()));
        }
        check_dim("rollout start state", self.state_dim, s0.len())?;
        let mut s = s0.to_vec();
        let mut out = Vec::with_capacity(actions.len());
        for (k, a) in actions.iter().enumerate() {
            check_dim("rollout action", self.action_dim, a.len())?;
            let sa = Array2::from_shape_vec((1, s.len()), s).unwrap();
            let aa = Array2::from_shape_vec((1, a.len()), a.clone()).unwrap();
            let next: Vec<T> = match self.predict_with(params, &sa, &aa) {
                Ok(v) => v.iter().copied().collect(),
                Err(SrlError::NonFinite(_)) => return Err(SrlError::RolloutDiverged { step: k }),
                Err(e) => return Err(e),
            };
            if next.iter().any(|v| !v.is_finite()) {
                return Err(SrlError::RolloutDiverged { step: k + 1 });
            }
            out.push(next.clone());
            s = next;
        }
        Ok(out)
    }
}

/// Mean over rows and columns of `(pred - target)^2`.
pub fn prediction_mse<T: Scalar>(pred: &Array2<T>, target: &Array2<T>) -> T {
    let n = T::from_usize(pred.len()).unwrap();
    pred.iter()
        .zip(target.iter())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<T>()
        / n
}
