//! Twin soft Q-functions trained on real transitions only.

use ndarray::{Array2, Zip};
use rand::Rng;

use crate::config::ActorQ;
use crate::error::{check_dim, Result, SrlError};
use crate::nets::{ema_update, Adam, FeedForwardSpec, Graph, Mlp, ParameterSet, Var};
use crate::rng::SrlRng;
use crate::scalar::Scalar;
use crate::transition::Batch;

/// Anything that can draw the first action of a fresh sequence, with its
/// log-probability, for a batch of states.
pub trait FirstActionSampler<T: Scalar> {
    /// Returns `(actions (n, d_a), log_probs (n, 1))`. `first_inputs`
    /// optionally supplies the previous executed action per row.
    fn sample_first(
        &self,
        states: &Array2<T>,
        first_inputs: Option<&Array2<T>>,
        rng: &mut SrlRng,
    ) -> Result<(Array2<T>, Array2<T>)>;
}

/// Both critics live in one parameter set: the first half belongs to `q1`,
/// the second to `q2`.
#[derive(Clone, Debug)]
pub struct TwinCritic<T> {
    mlp: Mlp,
    state_dim: usize,
    action_dim: usize,
    pub params: ParameterSet<T>,
    pub target: ParameterSet<T>,
}

impl<T: Scalar> TwinCritic<T> {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden_size: usize,
        num_hidden_layers: usize,
        rng: &mut R,
    ) -> Self {
        let spec = FeedForwardSpec::new(state_dim + action_dim, 1, hidden_size).with_hidden_layers(num_hidden_layers);
        let mlp = Mlp::new(spec);
        let mut params = mlp.init("q1", rng);
        params.extend(mlp.init("q2", rng));
        Self {
            mlp,
            state_dim,
            action_dim,
            target: params.clone(),
            params,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn split<'a>(&self, vars: &'a [Var]) -> (&'a [Var], &'a [Var]) {
        vars.split_at(self.mlp.num_tensors())
    }

    /// `(q1, q2)`, each `(n, 1)`, for bound parameter leaves `vars`.
    pub fn forward(&self, g: &mut Graph<T>, vars: &[Var], s: Var, a: Var) -> (Var, Var) {
        let (p1, p2) = self.split(vars);
        let x = g.concat_cols(&[s, a]);
        (self.mlp.forward(g, p1, x), self.mlp.forward(g, p2, x))
    }

    /// The value the actor maximizes.
    pub fn actor_value(&self, g: &mut Graph<T>, vars: &[Var], s: Var, a: Var, mode: ActorQ) -> Var {
        let (q1, q2) = self.forward(g, vars, s, a);
        match mode {
            ActorQ::Min => g.minimum(q1, q2),
            ActorQ::First => q1,
            ActorQ::Mean => {
                let q = g.add(q1, q2);
                g.scale(q, T::lit(0.5))
            }
        }
    }

    fn check(&self, states: &Array2<T>, actions: &Array2<T>) -> Result<()> {
        check_dim("critic state input", self.state_dim, states.ncols())?;
        check_dim("critic action input", self.action_dim, actions.ncols())
    }

    /// `(q1, q2)` on plain data for a given parameter set.
    pub fn q_values_with(
        &self,
        params: &ParameterSet<T>,
        states: &Array2<T>,
        actions: &Array2<T>,
    ) -> Result<(Array2<T>, Array2<T>)> {
        self.check(states, actions)?;
        let mut g = Graph::new();
        let vars = g.bind(params, false);
        let s = g.constant(states.clone());
        let a = g.constant(actions.clone());
        let (q1, q2) = self.forward(&mut g, &vars, s, a);
        Ok((g.value(q1).clone(), g.value(q2).clone()))
    }

    /// `q1(s, a)` for a single pair, online parameters.
    pub fn q_value(&self, state: &[T], action: &[T]) -> Result<T> {
        let s = Array2::from_shape_vec((1, state.len()), state.to_vec()).unwrap();
        let a = Array2::from_shape_vec((1, action.len()), action.to_vec()).unwrap();
        Ok(self.q_values_with(&self.params, &s, &a)?.0[[0, 0]])
    }

    /// Entropy-regularized bootstrap target. The next action is the first
    /// action of a sequence freshly sampled at `s'`; values are plain data,
    /// so no gradient can reach the target. `next_states` replaces
    /// `batch.next_states` as critic input (used for encoded states).
    #[allow(clippy::too_many_arguments)]
    pub fn td_target_with<P: FirstActionSampler<T> + ?Sized>(
        &self,
        rewards: &Array2<T>,
        dones: &Array2<T>,
        next_states: &Array2<T>,
        next_first_inputs: Option<&Array2<T>>,
        policy: &P,
        alpha: T,
        gamma: T,
        rng: &mut SrlRng,
    ) -> Result<Array2<T>> {
        let (next_a, next_logp) = policy.sample_first(next_states, next_first_inputs, rng)?;
        let (t1, t2) = self.q_values_with(&self.target, next_states, &next_a)?;
        let min_q = elementwise_min(&t1, &t2);
        Ok(soft_bellman_target(rewards, dones, &min_q, &next_logp, alpha, gamma))
    }

    pub fn td_target<P: FirstActionSampler<T> + ?Sized>(
        &self,
        batch: &Batch<T>,
        policy: &P,
        alpha: T,
        gamma: T,
        rng: &mut SrlRng,
    ) -> Result<Array2<T>> {
        self.td_target_with(&batch.rewards, &batch.dones, &batch.next_states, None, policy, alpha, gamma, rng)
    }

    /// `sum_k mean((q_k(s, a) - q_hat)^2)` and its gradients w.r.t. `params`.
    pub fn loss_and_grads(
        &self,
        params: &ParameterSet<T>,
        states: &Array2<T>,
        actions: &Array2<T>,
        q_hat: &Array2<T>,
    ) -> Result<(T, Vec<Array2<T>>)> {
        self.check(states, actions)?;
        let mut g = Graph::new();
        let vars = g.bind(params, true);
        let s = g.constant(states.clone());
        let a = g.constant(actions.clone());
        let loss = self.loss_graph(&mut g, &vars, s, a, q_hat);
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(SrlError::NonFinite("critic loss".into()));
        }
        Ok((value, g.backward(loss).collect(&g, &vars)))
    }

    /// Differentiable twin loss against a fixed target.
    pub fn loss_graph(&self, g: &mut Graph<T>, vars: &[Var], s: Var, a: Var, q_hat: &Array2<T>) -> Var {
        let (q1, q2) = self.forward(g, vars, s, a);
        let t = g.constant(q_hat.clone());
        let l1 = crate::nets::mse(g, q1, t);
        let l2 = crate::nets::mse(g, q2, t);
        g.add(l1, l2)
    }

    pub fn critic_loss(&self, batch: &Batch<T>, q_hat: &Array2<T>) -> Result<T> {
        let (q1, q2) = self.q_values_with(&self.params, &batch.states, &batch.actions)?;
        Ok(twin_loss_value(&q1, &q2, q_hat))
    }

    /// Computes the target and takes one optimizer step. Returns the loss.
    pub fn update<P: FirstActionSampler<T> + ?Sized>(
        &mut self,
        opt: &mut Adam<T>,
        batch: &Batch<T>,
        policy: &P,
        alpha: T,
        gamma: T,
        rng: &mut SrlRng,
    ) -> Result<T> {
        let q_hat = self.td_target(batch, policy, alpha, gamma, rng)?;
        let (loss, grads) = self.loss_and_grads(&self.params, &batch.states, &batch.actions, &q_hat)?;
        opt.step(&mut self.params, &grads);
        Ok(loss)
    }

    pub fn update_target(&mut self, tau: T) -> Result<()> {
        ema_update(&mut self.target, &self.params, tau)
    }
}

/// `r + (1 - done) * gamma * (min_q - alpha * logp)`, elementwise over `(n, 1)` columns.
pub fn soft_bellman_target<T: Scalar>(
    rewards: &Array2<T>,
    dones: &Array2<T>,
    min_next_q: &Array2<T>,
    next_log_probs: &Array2<T>,
    alpha: T,
    gamma: T,
) -> Array2<T> {
    let mut out = rewards.clone();
    Zip::from(&mut out)
        .and(dones)
        .and(min_next_q)
        .and(next_log_probs)
        .for_each(|o, &d, &q, &lp| {
            *o += (T::one() - d) * gamma * (q - alpha * lp);
        });
    out
}

pub fn elementwise_min<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> Array2<T> {
    let mut out = a.clone();
    Zip::from(&mut out).and(b).for_each(|x, &y| *x = x.min(y));
    out
}

/// Value of the twin loss for given critic outputs.
pub fn twin_loss_value<T: Scalar>(q1: &Array2<T>, q2: &Array2<T>, q_hat: &Array2<T>) -> T {
    crate::dynamics::prediction_mse(q1, q_hat) + crate::dynamics::prediction_mse(q2, q_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    #[test]
    fn bellman_arithmetic() {
        let q = soft_bellman_target(&array![[1.0f64]], &array![[0.0]], &array![[2.0]], &array![[-1.0]], 0.1, 0.9);
        assert!((q[[0, 0]] - 2.89).abs() < 1e-12);
    }

    #[test]
    fn terminal_and_zero_discount_reduce_to_reward() {
        let r = array![[0.7f64], [-0.3]];
        let done = soft_bellman_target(&r, &array![[1.0], [1.0]], &array![[5.0], [5.0]], &array![[-2.0], [1.0]], 0.2, 0.99);
        assert_eq!(done, r);
        let zero = soft_bellman_target(&r, &array![[0.0], [0.0]], &array![[5.0], [5.0]], &array![[-2.0], [1.0]], 0.2, 0.0);
        assert_eq!(zero, r);
    }

    #[test]
    fn twin_loss_arithmetic() {
        let q_hat = array![[2.0f64]];
        assert_eq!(twin_loss_value(&array![[3.0]], &array![[4.0]], &q_hat), 5.0);
        assert_eq!(twin_loss_value(&q_hat, &q_hat, &q_hat), 0.0);
    }

    #[test]
    fn q_value_is_finite_and_deterministic() {
        let c = TwinCritic::<f32>::new(3, 2, 16, 2, &mut seeded(1));
        let a = c.q_value(&[0.1, 0.2, 0.3], &[0.5, -0.5]).unwrap();
        let b = c.q_value(&[0.1, 0.2, 0.3], &[0.5, -0.5]).unwrap();
        assert!(a.is_finite());
        assert_eq!(a.to_bits(), b.to_bits());
    }

    struct Fixed(f64);

    impl FirstActionSampler<f64> for Fixed {
        fn sample_first(&self, states: &Array2<f64>, _: Option<&Array2<f64>>, _: &mut SrlRng) -> Result<(Array2<f64>, Array2<f64>)> {
            let n = states.nrows();
            Ok((Array2::from_elem((n, 1), self.0), Array2::from_elem((n, 1), -1.0)))
        }
    }

    #[test]
    fn bootstrap_uses_minimum_of_target_critics() {
        let c = TwinCritic::<f64>::new(2, 1, 8, 2, &mut seeded(5));
        let batch = Batch {
            states: array![[0.1, 0.2], [0.3, -0.4]],
            actions: array![[0.0], [0.5]],
            rewards: array![[0.0], [0.0]],
            next_states: array![[0.5, 0.5], [-0.2, 0.9]],
            dones: array![[0.0], [0.0]],
        };
        let q_hat = c.td_target(&batch, &Fixed(0.3), 0.0, 1.0, &mut seeded(0)).unwrap();
        let (t1, t2) = c.q_values_with(&c.target, &batch.next_states, &Array2::from_elem((2, 1), 0.3)).unwrap();
        for i in 0..2 {
            assert!(q_hat[[i, 0]] <= t1[[i, 0]] && q_hat[[i, 0]] <= t2[[i, 0]]);
        }
    }

    /// Two states: 0 moves to the absorbing state 1 with reward 1.
    #[test]
    fn learns_two_state_chain_value() {
        let gamma = 0.99;
        let mut c = TwinCritic::<f64>::new(2, 1, 32, 2, &mut seeded(7));
        let mut opt = Adam::new(1e-3);
        // s0 --(r=1, done)--> s1 ; s1 is never a start state
        let batch = Batch {
            states: array![[1.0, 0.0]],
            actions: array![[0.0]],
            rewards: array![[1.0]],
            next_states: array![[0.0, 1.0]],
            dones: array![[1.0]],
        };
        let mut rng = seeded(1);
        for _ in 0..1500 {
            c.update(&mut opt, &batch, &Fixed(0.0), 0.1, gamma, &mut rng).unwrap();
            c.update_target(0.01).unwrap();
        }
        let q = c.q_value(&[1.0, 0.0], &[0.0]).unwrap();
        assert!((q - 1.0).abs() < 0.05, "q = {q}");
    }
}
