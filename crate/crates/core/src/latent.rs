//! Latent-state variant: observations are encoded before reaching the
//! critic, actor and model. The model is trained with a multi-step cosine
//! consistency loss against a slowly moving target encoder.

use ndarray::Array2;
use rand::Rng;

use crate::dynamics::DynamicsModel;
use crate::error::{check_dim, Result, SrlError};
use crate::nets::{ema_update, FeedForwardSpec, Graph, Mlp, ParameterSet, Var};
use crate::scalar::Scalar;
use crate::transition::WindowBatch;

/// Online encoder `e_theta` and its EMA copy.
#[derive(Clone, Debug)]
pub struct Encoder<T> {
    /// `None` is the identity map (no parameters).
    net: Option<Mlp>,
    state_dim: usize,
    latent_dim: usize,
    pub params: ParameterSet<T>,
    pub target: ParameterSet<T>,
}

impl<T: Scalar> Encoder<T> {
    /// Two hidden layers, linear output.
    pub fn new<R: Rng + ?Sized>(state_dim: usize, latent_dim: usize, hidden_size: usize, rng: &mut R) -> Self {
        let net = Mlp::new(FeedForwardSpec::new(state_dim, latent_dim, hidden_size).with_hidden_layers(2));
        let params = net.init("encoder", rng);
        Self {
            net: Some(net),
            state_dim,
            latent_dim,
            target: params.clone(),
            params,
        }
    }

    /// `e(s) = s`.
    pub fn identity(dim: usize) -> Self {
        Self {
            net: None,
            state_dim: dim,
            latent_dim: dim,
            params: ParameterSet::new(),
            target: ParameterSet::new(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn is_identity(&self) -> bool {
        self.net.is_none()
    }

    pub fn encode(&self, g: &mut Graph<T>, vars: &[Var], s: Var) -> Var {
        match &self.net {
            Some(net) => net.forward(g, vars, s),
            None => s,
        }
    }

    pub fn encode_with(&self, params: &ParameterSet<T>, states: &Array2<T>) -> Result<Array2<T>> {
        check_dim("encoder input", self.state_dim, states.ncols())?;
        match &self.net {
            Some(net) => net.eval(params, states),
            None => Ok(states.clone()),
        }
    }

    pub fn encode_state(&self, state: &[T]) -> Result<Vec<T>> {
        let s = Array2::from_shape_vec((1, state.len()), state.to_vec()).unwrap();
        Ok(self.encode_with(&self.params, &s)?.into_raw_vec_and_offset().0)
    }

    pub fn update_target(&mut self, tau: T) -> Result<()> {
        ema_update(&mut self.target, &self.params, tau)
    }
}

pub struct LatentLoss<T> {
    pub loss: T,
    pub encoder_grads: Vec<Array2<T>>,
    pub model_grads: Vec<Array2<T>>,
}

fn check_norms<T: Scalar>(g: &Graph<T>, x: Var, step: usize) -> Result<()> {
    if g.value(x).rows().into_iter().any(|r| r.dot(&r).is_zero()) {
        return Err(SrlError::ZeroNorm { step });
    }
    Ok(())
}

/// Rowwise cosine similarity, `(n, 1)`.
fn cosine<T: Scalar>(g: &mut Graph<T>, a: Var, b: Var, step: usize) -> Result<Var> {
    check_norms(g, a, step)?;
    check_norms(g, b, step)?;
    let a = g.normalize_rows(a);
    let b = g.normalize_rows(b);
    let p = g.mul(a, b);
    Ok(g.sum_cols(p))
}

/// Batch mean of `sum_{h=0}^{H} -gamma^h cos(e~_{t+h}, e^_{t+h})`, where
/// `e~_t` is the online encoding of `o_t`, `e~_{t+h+1} = m(e~_{t+h}, a_{t+h})`
/// and `e^` are target encodings. Gradients reach the online encoder and
/// `model_params`; the target encoder is a constant.
pub fn temporal_consistency_loss<T: Scalar>(
    encoder: &Encoder<T>,
    encoder_params: &ParameterSet<T>,
    model: &DynamicsModel<T>,
    model_params: &ParameterSet<T>,
    batch: &WindowBatch<T>,
    gamma: T,
) -> Result<LatentLoss<T>> {
    let h = batch.horizon();
    if h == 0 || batch.observations.len() != h + 1 {
        return Err(SrlError::InvalidArgument("window batch needs H >= 1 and H + 1 observation blocks".into()));
    }
    check_dim("latent model state", encoder.latent_dim(), model.state_dim())?;
    let mut g = Graph::new();
    let ev = g.bind(encoder_params, true);
    let tv = g.bind(&encoder.target, false);
    let mv = g.bind(model_params, true);

    let o0 = g.constant(batch.observations[0].clone());
    let mut e = encoder.encode(&mut g, &ev, o0);
    let mut total: Option<Var> = None;
    let mut weight = T::one();
    for step in 0..=h {
        if step > 0 {
            let a = g.constant(batch.actions[step - 1].clone());
            e = model.forward(&mut g, &mv, e, a);
            weight *= gamma;
        }
        let o = g.constant(batch.observations[step].clone());
        let target = encoder.encode(&mut g, &tv, o);
        let c = cosine(&mut g, e, target, step)?;
        let term = g.scale(c, -weight);
        total = Some(match total {
            Some(t) => g.add(t, term),
            None => term,
        });
    }
    let loss = g.mean(total.unwrap());
    let value = g.scalar(loss);
    if !value.is_finite() {
        return Err(SrlError::NonFinite("temporal consistency loss".into()));
    }
    let grads = g.backward(loss);
    Ok(LatentLoss {
        loss: value,
        encoder_grads: grads.collect(&g, &ev),
        model_grads: grads.collect(&g, &mv),
    })
}
