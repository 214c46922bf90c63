//! Sequence policy: feed-forward trunk, a GRU fed the previous action, and
//! Gaussian heads squashed by tanh. One state in, any number of actions out.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{ActorQ, TemperaturePositions};
use crate::critic::{FirstActionSampler, TwinCritic};
use crate::error::{check_dim, Result, SrlError};
use crate::nets::{
    Activation, Adam, FeedForwardSpec, GatedRecurrentCellSpec, Graph, GruCell, Mlp, ParameterSet, Var,
};
use crate::rng::SrlRng;
use crate::scalar::Scalar;
use crate::transition::ActionSequence;

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Clone, Debug)]
pub struct SequencePolicy<T> {
    trunk: Mlp,
    cell: GruCell,
    state_dim: usize,
    action_dim: usize,
    hidden: usize,
    log_std_min: f64,
    log_std_max: f64,
    pub params: ParameterSet<T>,
}

/// Graph handles produced while unrolling the policy.
pub struct PolicyTrace {
    /// Squashed actions, `(n, d_a)` per position.
    pub actions: Vec<Var>,
    /// Log-probabilities, `(n, 1)` per position.
    pub log_probs: Vec<Var>,
    /// States at which each action was chosen (real for position 0, imagined after).
    pub states: Vec<Var>,
}

impl<T: Scalar> SequencePolicy<T> {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden_size: usize,
        log_std_bounds: (f64, f64),
        rng: &mut R,
    ) -> Self {
        // Two layers: relu hidden, then tanh so the GRU starts inside (-1, 1).
        let trunk = Mlp::new(
            FeedForwardSpec::new(state_dim, hidden_size, hidden_size)
                .with_hidden_layers(1)
                .with_output_activation(Activation::Tanh),
        );
        let cell = GruCell::new(GatedRecurrentCellSpec {
            input_dim: action_dim,
            hidden_dim: hidden_size,
        });
        let head = Mlp::new(FeedForwardSpec::new(hidden_size, action_dim, hidden_size).with_hidden_layers(0));
        let mut params = trunk.init("actor.trunk", rng);
        params.extend(cell.init("actor.gru", rng));
        params.extend(head.init("actor.mean", rng));
        params.extend(head.init("actor.log_std", rng));
        Self {
            trunk,
            cell,
            state_dim,
            action_dim,
            hidden: hidden_size,
            log_std_min: log_std_bounds.0,
            log_std_max: log_std_bounds.1,
            params,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn log_std_bounds(&self) -> (f64, f64) {
        (self.log_std_min, self.log_std_max)
    }

    fn slices<'a>(&self, vars: &'a [Var]) -> (&'a [Var], &'a [Var], &'a [Var], &'a [Var]) {
        let t = self.trunk.num_tensors();
        let c = t + GruCell::NUM_TENSORS;
        (&vars[..t], &vars[t..c], &vars[c..c + 2], &vars[c + 2..c + 4])
    }

    /// Unrolls `noise.len()` positions from `states` (`(n, d_s)`).
    ///
    /// `noise[j]` is the standard-normal draw for position `j`; `None`
    /// gives the deterministic (mean) action. `first_input` replaces the zero
    /// recurrent input of position 0. When `transition` is given, position
    /// `j + 1` is chosen at `transition(s_j, a_j)` and the trace records the
    /// imagined states; otherwise the state stays at `states`.
    #[allow(clippy::too_many_arguments)]
    pub fn unroll(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        states: Var,
        noise: &[Option<Array2<T>>],
        first_input: Option<Var>,
        mut transition: Option<&mut dyn FnMut(&mut Graph<T>, Var, Var) -> Var>,
    ) -> PolicyTrace {
        let (trunk, gru, mean_head, std_head) = self.slices(vars);
        let n = g.shape(states).0;
        let mut h = self.trunk.forward(g, trunk, states);
        let mut input = first_input.unwrap_or_else(|| g.constant(Array2::zeros((n, self.action_dim))));
        let mut s = states;
        let mut trace = PolicyTrace {
            actions: Vec::with_capacity(noise.len()),
            log_probs: Vec::with_capacity(noise.len()),
            states: Vec::with_capacity(noise.len()),
        };
        for (j, eps) in noise.iter().enumerate() {
            h = self.cell.step(g, gru, input, h);
            let mean = g.matmul(h, mean_head[0]);
            let mean = g.add_row(mean, mean_head[1]);
            let log_std = g.matmul(h, std_head[0]);
            let log_std = g.add_row(log_std, std_head[1]);
            let log_std = g.clamp(log_std, T::lit(self.log_std_min), T::lit(self.log_std_max));

            let zeros;
            let eps = match eps {
                Some(e) => e,
                None => {
                    zeros = Array2::zeros((n, self.action_dim));
                    &zeros
                }
            };
            let u = if eps.iter().all(|v| v.is_zero()) {
                mean
            } else {
                let std = g.exp(log_std);
                let e = g.constant(eps.clone());
                let noise_term = g.mul(std, e);
                g.add(mean, noise_term)
            };
            let a = g.tanh(u);

            // log N(u; mean, std) - log(1 - tanh(u)^2), the latter written as
            // 2 (ln 2 - u - softplus(-2u)) for stability.
            let base = eps.mapv(|v| T::lit(-0.5) * v * v - T::lit(0.5 * LN_2PI));
            let base = g.constant(base);
            let minus_2u = g.scale(u, T::lit(-2.0));
            let sp = g.softplus(minus_2u);
            let corr = g.add(u, sp);
            let corr = g.neg(corr);
            let corr = g.add_scalar(corr, T::lit(LN_2));
            let corr = g.scale(corr, T::lit(2.0));
            let lp = g.sub(base, log_std);
            let lp = g.sub(lp, corr);
            let lp = g.sum_cols(lp);

            trace.actions.push(a);
            trace.log_probs.push(lp);
            trace.states.push(s);

            if j + 1 < noise.len() {
                if let Some(step) = transition.as_deref_mut() {
                    s = step(g, s, a);
                }
            }
            input = a;
        }
        trace
    }

    fn draw_noise(&self, n: usize, len: usize, rng: &mut SrlRng) -> Vec<Option<Array2<T>>> {
        (0..len)
            .map(|_| {
                Some(Array2::from_shape_simple_fn((n, self.action_dim), || {
                    T::lit(rng.sample::<f64, _>(StandardNormal))
                }))
            })
            .collect()
    }

    /// Standard-normal draws for `len` positions, in the order [`Self::sample_sequence`] consumes them.
    pub fn noise(&self, n: usize, len: usize, rng: &mut SrlRng) -> Vec<Array2<T>> {
        self.draw_noise(n, len, rng).into_iter().map(Option::unwrap).collect()
    }

    /// `len` actions from a single state. Noise is drawn position by
    /// position, so a shorter request with the same seed is a prefix.
    pub fn sample_sequence(
        &self,
        state: &[T],
        len: usize,
        deterministic: bool,
        first_input: Option<&[T]>,
        rng: &mut SrlRng,
    ) -> Result<ActionSequence<T>> {
        if len == 0 {
            return Err(SrlError::InvalidArgument("sequence length must be at least 1".into()));
        }
        check_dim("policy state", self.state_dim, state.len())?;
        if let Some(x) = first_input {
            check_dim("policy first input", self.action_dim, x.len())?;
        }
        let noise = if deterministic {
            vec![None; len]
        } else {
            self.draw_noise(1, len, rng)
        };
        let mut g = Graph::new();
        let vars = g.bind(&self.params, false);
        let s = g.row_constant(state);
        let first = first_input.map(|x| g.row_constant(x));
        let trace = self.unroll(&mut g, &vars, s, &noise, first, None);
        let actions = trace.actions.iter().map(|&a| g.value(a).iter().copied().collect()).collect();
        let log_probs: Vec<T> = trace.log_probs.iter().map(|&l| g.scalar(l)).collect();
        if log_probs.iter().any(|l| !l.is_finite()) {
            return Err(SrlError::NonFinite("policy log-probability".into()));
        }
        Ok(ActionSequence {
            actions,
            log_probs,
            origin_state: state.to_vec(),
        })
    }

    /// Batched first-position sample with explicit noise.
    pub fn first_action_with_noise(
        &self,
        states: &Array2<T>,
        first_inputs: Option<&Array2<T>>,
        noise: Option<Array2<T>>,
    ) -> Result<(Array2<T>, Array2<T>)> {
        check_dim("policy state", self.state_dim, states.ncols())?;
        let mut g = Graph::new();
        let vars = g.bind(&self.params, false);
        let s = g.constant(states.clone());
        let first = first_inputs.map(|x| g.constant(x.clone()));
        let trace = self.unroll(&mut g, &vars, s, &[noise], first, None);
        Ok((g.value(trace.actions[0]).clone(), g.value(trace.log_probs[0]).clone()))
    }
}

impl<T: Scalar> FirstActionSampler<T> for SequencePolicy<T> {
    fn sample_first(
        &self,
        states: &Array2<T>,
        first_inputs: Option<&Array2<T>>,
        rng: &mut SrlRng,
    ) -> Result<(Array2<T>, Array2<T>)> {
        let noise = self.draw_noise(states.nrows(), 1, rng).pop().unwrap();
        self.first_action_with_noise(states, first_inputs, noise)
    }
}

/// Inputs of the sequence actor objective.
pub struct ActorObjective<'a, T: Scalar> {
    pub critic: &'a TwinCritic<T>,
    /// Critic parameters to evaluate (frozen).
    pub critic_params: &'a ParameterSet<T>,
    /// One-step transition used for imagined states, parameters frozen.
    pub transition: Option<&'a dyn Fn(&mut Graph<T>, &[Var], Var, Var) -> Var>,
    pub transition_params: Option<&'a ParameterSet<T>>,
    pub actor_q: ActorQ,
    pub alpha: T,
}

/// Loss value, gradients and per-position mean log-probabilities.
pub struct ActorStep<T> {
    pub loss: T,
    pub grads: Vec<Array2<T>>,
    pub mean_log_probs: Vec<T>,
}

impl<T: Scalar> SequencePolicy<T> {
    /// Mean over the batch of `sum_j [alpha logpi(a_j | s_j) - Q(s_j, a_j)]`
    /// where `s_0` are real states and later `s_j` are imagined by the
    /// transition. Gradients reach only `params`.
    pub fn actor_loss_and_grads(
        &self,
        params: &ParameterSet<T>,
        objective: &ActorObjective<'_, T>,
        states: &Array2<T>,
        first_inputs: Option<&Array2<T>>,
        noise: &[Array2<T>],
    ) -> Result<ActorStep<T>> {
        check_dim("policy state", self.state_dim, states.ncols())?;
        if noise.is_empty() {
            return Err(SrlError::InvalidArgument("actor loss needs J >= 1".into()));
        }
        if noise.len() > 1 && objective.transition.is_none() {
            return Err(SrlError::InvalidArgument("J > 1 needs a transition model".into()));
        }
        let mut g = Graph::new();
        let vars = g.bind(params, true);
        let critic_vars = g.bind(objective.critic_params, false);
        let model_vars = objective.transition_params.map(|p| g.bind(p, false)).unwrap_or_default();
        let s = g.constant(states.clone());
        let first = first_inputs.map(|x| g.constant(x.clone()));
        let noise: Vec<Option<Array2<T>>> = noise.iter().cloned().map(Some).collect();

        let trace = match objective.transition {
            Some(f) => {
                let mut step = |g: &mut Graph<T>, s: Var, a: Var| f(g, &model_vars, s, a);
                self.unroll(&mut g, &vars, s, &noise, first, Some(&mut step))
            }
            None => self.unroll(&mut g, &vars, s, &noise, first, None),
        };

        for (j, &sj) in trace.states.iter().enumerate().skip(1) {
            if g.value(sj).iter().any(|v| !v.is_finite()) {
                return Err(SrlError::RolloutDiverged { step: j });
            }
        }

        let mut total: Option<Var> = None;
        for j in 0..trace.actions.len() {
            let q = objective.critic.actor_value(&mut g, &critic_vars, trace.states[j], trace.actions[j], objective.actor_q);
            let ent = g.scale(trace.log_probs[j], objective.alpha);
            let term = g.sub(ent, q);
            total = Some(match total {
                Some(t) => g.add(t, term),
                None => term,
            });
        }
        let loss = g.mean(total.unwrap());
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(SrlError::NonFinite("actor loss".into()));
        }
        let grads = g.backward(loss).collect(&g, &vars);
        let mean_log_probs = trace
            .log_probs
            .iter()
            .map(|&l| {
                let v = g.value(l);
                v.iter().copied().sum::<T>() / T::from_usize(v.len()).unwrap()
            })
            .collect();
        Ok(ActorStep {
            loss: value,
            grads,
            mean_log_probs,
        })
    }

    /// One optimizer step on the policy.
    pub fn update(
        &mut self,
        opt: &mut Adam<T>,
        objective: &ActorObjective<'_, T>,
        states: &Array2<T>,
        first_inputs: Option<&Array2<T>>,
        noise: &[Array2<T>],
    ) -> Result<ActorStep<T>> {
        let step = self.actor_loss_and_grads(&self.params, objective, states, first_inputs, noise)?;
        opt.step(&mut self.params, &step.grads);
        Ok(step)
    }
}

/// Entropy temperature, learned through its logarithm so `alpha > 0`.
#[derive(Clone, Debug)]
pub struct Temperature<T> {
    pub log_alpha: ParameterSet<T>,
    pub target_entropy: T,
    pub learn: bool,
}

impl<T: Scalar> Temperature<T> {
    pub fn new(init_alpha: f64, target_entropy: f64, learn: bool) -> Self {
        let mut log_alpha = ParameterSet::new();
        log_alpha.push("log_alpha", Array2::from_elem((1, 1), T::lit(init_alpha.ln())));
        Self {
            log_alpha,
            target_entropy: T::lit(target_entropy),
            learn,
        }
    }

    pub fn alpha(&self) -> T {
        self.log_alpha.tensor(0)[[0, 0]].exp()
    }

    /// `mean_j -alpha (logpi_j + target_entropy)` over the supplied (detached) log-probs.
    pub fn loss(&self, log_probs: &[T]) -> T {
        let n = T::from_usize(log_probs.len()).unwrap();
        let a = self.alpha();
        log_probs.iter().map(|&l| -a * (l + self.target_entropy)).sum::<T>() / n
    }

    /// Derivative of [`Self::loss`] with respect to `log alpha`.
    pub fn grad_log_alpha(&self, log_probs: &[T]) -> T {
        self.loss(log_probs)
    }

    pub fn update(&mut self, opt: &mut Adam<T>, log_probs: &[T], positions: TemperaturePositions) -> T {
        let used = match positions {
            TemperaturePositions::All => log_probs,
            TemperaturePositions::First => &log_probs[..1],
        };
        let loss = self.loss(used);
        if self.learn {
            let g = Array2::from_elem((1, 1), self.grad_log_alpha(used));
            opt.step(&mut self.log_alpha, &[g]);
        }
        loss
    }
}
