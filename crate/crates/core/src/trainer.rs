//! The training loop shared by SRL and the SAC baseline.
//!
//! One decision samples a sequence of `J` actions at the current
//! observation and executes it action by action. Every primitive step is a
//! real transition in the replay and, once warm-up is over, one gradient
//! step: model, critics, (on schedule) actor and temperature, then target
//! EMAs.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::actor::ActorObjective;
use crate::agent::AgentBundle;
use crate::config::{Algo, FirstInput, TrainConfig, UpdateUnit};
use crate::envs::Env;
use crate::error::{Result, SrlError};
use crate::eval::periodic_eval;
use crate::latent::temporal_consistency_loss;
use crate::nets::{Adam, Graph, Var};
use crate::replay::ReplayBuffer;
use crate::rng::{stream, RngStreams};
use crate::scalar::{from_f64_slice, Scalar};
use crate::transition::{Batch, Transition};

/// Exact event counts, for auditing the update schedule.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub env_steps: u64,
    pub decisions: u64,
    pub episodes: u64,
    /// Gradient steps, i.e. training iterations.
    pub grad_steps: u64,
    pub model_updates: u64,
    pub critic_updates: u64,
    pub actor_updates: u64,
    pub temperature_updates: u64,
    pub critic_ema_updates: u64,
    pub model_ema_updates: u64,
    pub encoder_ema_updates: u64,
    pub replay_pushes: u64,
}

/// One line of `metrics.csv`. Losses are averaged since the previous row;
/// empty when no such update happened.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub iteration: u64,
    pub decisions: u64,
    pub episodes: u64,
    pub model_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub alpha_loss: Option<f64>,
    pub alpha: f64,
    pub eval_return: f64,
    pub eval_std_error: f64,
}

impl MetricsRow {
    pub const HEADER: &'static str =
        "step,iteration,decisions,episodes,model_loss,critic_loss,actor_loss,alpha_loss,alpha,eval_return,eval_std_error";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.iteration,
            self.decisions,
            self.episodes,
            opt(self.model_loss),
            opt(self.critic_loss),
            opt(self.actor_loss),
            opt(self.alpha_loss),
            self.alpha,
            self.eval_return,
            self.eval_std_error
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub algo: Algo,
    pub env: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    pub counters: Option<Counters>,
    pub final_eval_return: Option<f64>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Clone, Copy, Debug, Default)]
struct Mean {
    sum: f64,
    n: u64,
}

impl Mean {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn take(&mut self) -> Option<f64> {
        let out = (self.n > 0).then(|| self.sum / self.n as f64);
        *self = Self::default();
        out
    }
}

#[derive(Clone, Debug, Default)]
struct Losses {
    model: Mean,
    critic: Mean,
    actor: Mean,
    alpha: Mean,
}

struct Optimizers<T> {
    model: Adam<T>,
    critic: Adam<T>,
    actor: Adam<T>,
    alpha: Adam<T>,
    encoder: Adam<T>,
}

pub struct TrainOutcome<T> {
    pub agent: AgentBundle<T>,
    pub counters: Counters,
    pub metrics: Vec<MetricsRow>,
}

pub struct Trainer<T: Scalar> {
    pub agent: AgentBundle<T>,
    pub replay: ReplayBuffer<T>,
    pub counters: Counters,
    pub metrics: Vec<MetricsRow>,
    env: Box<dyn Env>,
    eval_env: Box<dyn Env>,
    rngs: RngStreams,
    eval_seed: u64,
    opt: Optimizers<T>,
    obs: Vec<f64>,
    previous: Option<Vec<f64>>,
    pending_actor: bool,
    losses: Losses,
    last_error_context: String,
    run_dir: Option<PathBuf>,
    manifest: Option<RunManifest>,
    started: Instant,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: &TrainConfig, env: Box<dyn Env>) -> Result<Self> {
        if config.algo == Algo::Sac && config.j != 1 {
            log::warn!("SAC uses one-step sequences; ignoring J={}", config.j);
        }
        let agent = AgentBundle::new(config, env.spec())?;
        Self::with_agent(agent, env)
    }

    /// Continues training `agent` (fresh optimizers, empty replay).
    pub fn with_agent(agent: AgentBundle<T>, mut env: Box<dyn Env>) -> Result<Self> {
        let spec = env.spec().clone();
        if spec.state_dim != agent.spec.state_dim || spec.action_dim != agent.spec.action_dim {
            return Err(SrlError::Dimension {
                what: "environment (state, action)".into(),
                expected: agent.spec.state_dim * 1000 + agent.spec.action_dim,
                got: spec.state_dim * 1000 + spec.action_dim,
            });
        }
        let c = &agent.config;
        let clip = c.grad_clip.map(T::lit);
        let adam = |lr: f64| Adam::new(T::lit(lr)).with_clipping(clip);
        let opt = Optimizers {
            model: adam(c.lr.model),
            critic: adam(c.lr.critic),
            actor: adam(c.lr.actor),
            alpha: adam(c.lr.alpha),
            encoder: adam(c.lr.model),
        };
        let mut rngs = RngStreams::new(c.seed);
        let eval_seed = stream(c.seed, 4).random();
        let replay = ReplayBuffer::new(c.buffer_capacity.min(c.max_steps.max(1)), spec.state_dim, spec.action_dim);
        let eval_env = env.fresh()?;
        let obs = env.reset(rngs.env.random())?;
        Ok(Self {
            agent,
            replay,
            counters: Counters::default(),
            metrics: Vec::new(),
            env,
            eval_env,
            rngs,
            eval_seed,
            opt,
            obs,
            previous: None,
            pending_actor: false,
            losses: Losses::default(),
            last_error_context: String::new(),
            run_dir: None,
            manifest: None,
            started: Instant::now(),
        })
    }

    /// Writes `metrics.csv`, `timing.csv`, `manifest.json` and (if enabled)
    /// `checkpoint/` into `dir`.
    pub fn with_run_dir(mut self, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.csv"), format!("{}\n", MetricsRow::HEADER))?;
        fs::write(dir.join("timing.csv"), "step,wall_seconds\n")?;
        let c = &self.agent.config;
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            algo: c.algo,
            env: self.agent.spec.name.clone(),
            seed: c.seed,
            config: c.clone(),
            started_unix: unix_now(),
            finished_unix: None,
            artifacts: vec!["metrics.csv".into(), "timing.csv".into()],
            counters: None,
            final_eval_return: None,
        };
        manifest.save(dir)?;
        self.manifest = Some(manifest);
        self.run_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.agent.config
    }

    /// Trains until `max_steps` primitive steps have been executed, then
    /// packages the result.
    pub fn run(mut self) -> Result<TrainOutcome<T>> {
        self.train()?;
        Ok(TrainOutcome {
            agent: self.agent,
            counters: self.counters,
            metrics: self.metrics,
        })
    }

    /// Like [`Self::run`] but keeps the trainer (and its replay) around.
    pub fn train(&mut self) -> Result<()> {
        while self.counters.env_steps < self.agent.config.max_steps as u64 {
            if let Err(e) = self.decision() {
                self.dump_diagnostics(&e);
                return Err(e);
            }
        }
        if self.metrics.last().is_none_or(|r| r.step != self.counters.env_steps) {
            self.evaluate_and_log()?;
        }
        if let (Some(dir), Some(m)) = (&self.run_dir, &mut self.manifest) {
            m.finished_unix = Some(unix_now());
            m.counters = Some(self.counters.clone());
            m.final_eval_return = self.metrics.last().map(|r| r.eval_return);
            m.save(dir)?;
        }
        Ok(())
    }

    /// Samples one sequence and executes it until it ends, the episode
    /// ends, or the step budget runs out.
    pub fn decision(&mut self) -> Result<()> {
        let c = &self.agent.config;
        let j = c.effective_j();
        let d_a = self.agent.spec.action_dim;
        let actions = if self.counters.env_steps < c.start_steps as u64 {
            let rng = &mut self.rngs.policy;
            (0..j)
                .map(|_| (0..d_a).map(|_| rng.random_range(-1.0..=1.0)).collect())
                .collect()
        } else {
            use crate::eval::Controller;
            self.agent
                .act(&self.obs, j, false, self.previous.as_deref(), &mut self.rngs.policy)?
                .actions
        };
        self.counters.decisions += 1;
        if c.actor_update_unit == UpdateUnit::Decision
            && self.counters.decisions.is_multiple_of(c.actor_update_frequency() as u64)
        {
            self.pending_actor = true;
        }
        for a in actions {
            let step = self.env.step(&a)?;
            let next = step.observation.clone();
            if self.agent.encoder.is_none() {
                if let Some(m) = &mut self.agent.model {
                    m.observe(&self.obs, &next);
                }
            }
            let t: Transition<T> = Transition::new(
                from_f64_slice(&self.obs),
                from_f64_slice(&a),
                T::lit(step.reward),
                from_f64_slice(&next),
                step.terminated,
            )
            .with_truncated(step.truncated);
            self.replay.push(&t)?;
            self.counters.replay_pushes += 1;
            self.counters.env_steps += 1;
            self.obs = next;
            self.previous = Some(a);

            let c = &self.agent.config;
            if self.counters.env_steps >= c.start_steps as u64 && self.replay.len() >= c.batch_size {
                self.gradient_step()?;
            }
            if self.counters.env_steps.is_multiple_of(self.agent.config.eval_frequency as u64) {
                self.evaluate_and_log()?;
            }
            if step.done() {
                self.counters.episodes += 1;
                self.obs = self.env.reset(self.rngs.env.random())?;
                self.previous = None;
                break;
            }
            if self.counters.env_steps >= self.agent.config.max_steps as u64 {
                break;
            }
        }
        Ok(())
    }

    /// One training iteration on a fresh replay batch.
    pub fn gradient_step(&mut self) -> Result<()> {
        let c = &self.agent.config;
        let n = c.batch_size;
        let (batch, prev) = match c.first_input {
            FirstInput::PreviousAction => {
                let (b, p) = self.replay.sample_with_previous(n, &mut self.rngs.sampler)?;
                (b, Some(p))
            }
            FirstInput::Zero => (self.replay.sample(n, &mut self.rngs.sampler)?, None),
        };
        self.counters.grad_steps += 1;
        self.last_error_context = format!("gradient step {}", self.counters.grad_steps);

        let policy_states = if self.agent.encoder.is_some() {
            self.latent_model_and_critic(&batch, prev.as_ref())?
        } else {
            self.model_and_critic(&batch, prev.as_ref())?;
            batch.states.clone()
        };

        let c = &self.agent.config;
        let actor_now = match c.actor_update_unit {
            UpdateUnit::GradientStep => self.counters.grad_steps.is_multiple_of(c.actor_update_frequency() as u64),
            UpdateUnit::Decision => std::mem::take(&mut self.pending_actor),
        };
        if actor_now {
            self.actor_and_temperature(&policy_states, prev.as_ref())?;
        }

        let tau = T::lit(self.agent.config.tau);
        self.agent.critic.update_target(tau)?;
        self.counters.critic_ema_updates += 1;
        if let Some(m) = self.agent.model.as_mut().filter(|_| self.agent.config.model_updates) {
            m.update_target(tau)?;
            self.counters.model_ema_updates += 1;
        }
        if let Some(e) = self.agent.encoder.as_mut().filter(|e| !e.is_identity()) {
            e.update_target(tau)?;
            self.counters.encoder_ema_updates += 1;
        }
        Ok(())
    }

    fn model_and_critic(&mut self, batch: &Batch<T>, prev: Option<&Array2<T>>) -> Result<()> {
        let c = &self.agent.config;
        let gamma = T::lit(c.gamma);
        if c.trains_model() {
            let m = self.agent.model.as_mut().expect("model present when trained");
            let loss = m.update(&mut self.opt.model, batch)?;
            self.losses.model.add(loss.as_f64());
            self.counters.model_updates += 1;
        }
        let alpha = self.agent.temperature.alpha();
        let critic = &mut self.agent.critic;
        // The sequence sampled at s' would start after the action taken at s.
        let next_first = prev.map(|_| &batch.actions);
        let q_hat = critic.td_target_with(
            &batch.rewards,
            &batch.dones,
            &batch.next_states,
            next_first,
            &self.agent.actor,
            alpha,
            gamma,
            &mut self.rngs.policy,
        )?;
        let (loss, grads) = critic.loss_and_grads(&critic.params, &batch.states, &batch.actions, &q_hat)?;
        self.opt.critic.step(&mut critic.params, &grads);
        self.losses.critic.add(loss.as_f64());
        self.counters.critic_updates += 1;
        Ok(())
    }

    /// Latent mode: consistency loss for encoder and model, critic loss on
    /// online encodings (also reaching the encoder). Returns the encoded
    /// batch states for the actor.
    fn latent_model_and_critic(&mut self, batch: &Batch<T>, prev: Option<&Array2<T>>) -> Result<Array2<T>> {
        let c = &self.agent.config;
        let gamma = T::lit(c.gamma);
        let trains_model = c.trains_model();
        let horizon = c.latent.horizon;
        let agent = &mut self.agent;
        let enc = agent.encoder.as_ref().expect("latent mode");
        let model = agent.model.as_ref().expect("latent mode has a model");

        let consistency = if trains_model {
            let w = self.replay.sample_windows(batch.len(), horizon, &mut self.rngs.sampler)?;
            Some(temporal_consistency_loss(enc, &enc.params, model, &model.params, &w, gamma)?)
        } else {
            None
        };

        let alpha = agent.temperature.alpha();
        let z_next = enc.encode_with(&enc.target, &batch.next_states)?;
        let next_first = prev.map(|_| &batch.actions);
        let q_hat = agent.critic.td_target_with(
            &batch.rewards,
            &batch.dones,
            &z_next,
            next_first,
            &agent.actor,
            alpha,
            gamma,
            &mut self.rngs.policy,
        )?;
        let mut g = Graph::new();
        let ev = g.bind(&enc.params, true);
        let cv = g.bind(&agent.critic.params, true);
        let s = g.constant(batch.states.clone());
        let z = enc.encode(&mut g, &ev, s);
        let a = g.constant(batch.actions.clone());
        let loss = agent.critic.loss_graph(&mut g, &cv, z, a, &q_hat);
        let critic_loss = g.scalar(loss);
        if !critic_loss.is_finite() {
            return Err(SrlError::NonFinite("critic loss".into()));
        }
        let grads = g.backward(loss);
        let critic_grads = grads.collect(&g, &cv);
        let mut enc_grads = grads.collect(&g, &ev);

        if let Some(tc) = consistency {
            for (e, t) in enc_grads.iter_mut().zip(&tc.encoder_grads) {
                *e += t;
            }
            let m = agent.model.as_mut().unwrap();
            self.opt.model.step(&mut m.params, &tc.model_grads);
            self.losses.model.add(tc.loss.as_f64());
            self.counters.model_updates += 1;
        }
        self.opt.critic.step(&mut agent.critic.params, &critic_grads);
        self.losses.critic.add(critic_loss.as_f64());
        self.counters.critic_updates += 1;
        let enc = agent.encoder.as_mut().unwrap();
        if !enc.is_identity() {
            self.opt.encoder.step(&mut enc.params, &enc_grads);
        }
        enc.encode_with(&enc.params, &batch.states)
    }

    fn actor_and_temperature(&mut self, states: &Array2<T>, prev: Option<&Array2<T>>) -> Result<()> {
        let AgentBundle {
            config,
            actor,
            critic,
            model,
            temperature,
            ..
        } = &mut self.agent;
        let j = config.effective_j();
        let noise = actor.noise(states.nrows(), j, &mut self.rngs.policy);
        let m = model.as_ref();
        let step_fn = |g: &mut Graph<T>, v: &[Var], s: Var, a: Var| m.expect("model for imagined states").forward(g, v, s, a);
        let imagine = j > 1 && m.is_some();
        let objective = ActorObjective {
            critic,
            critic_params: &critic.params,
            transition: if imagine { Some(&step_fn) } else { None },
            transition_params: if imagine { m.map(|m| &m.target) } else { None },
            actor_q: config.actor_q,
            alpha: temperature.alpha(),
        };
        let step = actor.update(&mut self.opt.actor, &objective, states, prev, &noise)?;
        self.losses.actor.add(step.loss.as_f64());
        self.counters.actor_updates += 1;
        let alpha_loss = temperature.update(&mut self.opt.alpha, &step.mean_log_probs, config.temperature_positions);
        self.losses.alpha.add(alpha_loss.as_f64());
        if temperature.learn {
            self.counters.temperature_updates += 1;
        }
        Ok(())
    }

    /// Deterministic evaluation at the training `J`, one metrics row, and a
    /// checkpoint.
    pub fn evaluate_and_log(&mut self) -> Result<()> {
        let c = &self.agent.config;
        let summary = periodic_eval(
            &self.agent,
            self.eval_env.as_mut(),
            c.effective_j(),
            c.eval_episodes,
            self.eval_seed,
        )?;
        let row = MetricsRow {
            step: self.counters.env_steps,
            iteration: self.counters.grad_steps,
            decisions: self.counters.decisions,
            episodes: self.counters.episodes,
            model_loss: self.losses.model.take(),
            critic_loss: self.losses.critic.take(),
            actor_loss: self.losses.actor.take(),
            alpha_loss: self.losses.alpha.take(),
            alpha: self.agent.temperature.alpha().as_f64(),
            eval_return: summary.mean,
            eval_std_error: summary.std_error,
        };
        log::info!(
            "step {} eval {:.2} +- {:.2} alpha {:.4}",
            row.step,
            row.eval_return,
            row.eval_std_error,
            row.alpha
        );
        if let Some(dir) = &self.run_dir {
            let mut f = OpenOptions::new().append(true).open(dir.join("metrics.csv"))?;
            writeln!(f, "{}", row.to_csv())?;
            let mut f = OpenOptions::new().append(true).open(dir.join("timing.csv"))?;
            writeln!(f, "{},{:.3}", row.step, self.started.elapsed().as_secs_f64())?;
            if self.agent.config.checkpoints {
                self.agent.save(&dir.join("checkpoint"))?;
                if let Some(m) = &mut self.manifest {
                    if !m.artifacts.iter().any(|a| a == "checkpoint") {
                        m.artifacts.push("checkpoint".into());
                        m.save(dir)?;
                    }
                }
            }
        }
        self.metrics.push(row);
        Ok(())
    }

    fn dump_diagnostics(&self, err: &SrlError) {
        log::error!("training aborted at {}: {err}", self.last_error_context);
        let Some(dir) = &self.run_dir else { return };
        let report = serde_json::json!({
            "error": err.to_string(),
            "context": self.last_error_context,
            "counters": self.counters,
            "alpha": self.agent.temperature.alpha().as_f64(),
            "actor_finite": self.agent.actor.params.all_finite(),
            "critic_finite": self.agent.critic.params.all_finite(),
            "model_finite": self.agent.model.as_ref().map(|m| m.params.all_finite()),
            "observation": self.obs,
        });
        if let Ok(text) = serde_json::to_string_pretty(&report) {
            let _ = fs::write(dir.join("diagnostic.json"), text);
        }
    }
}

/// Trains an SRL agent (`algo` is forced to SRL).
pub fn srl_train<T: Scalar>(config: &TrainConfig, env: Box<dyn Env>) -> Result<TrainOutcome<T>> {
    let mut c = config.clone();
    c.algo = Algo::Srl;
    Trainer::new(&c, env)?.run()
}

/// Trains the SAC baseline: one-step policy, no model.
pub fn sac_train<T: Scalar>(config: &TrainConfig, env: Box<dyn Env>) -> Result<TrainOutcome<T>> {
    let mut c = config.clone();
    c.algo = Algo::Sac;
    Trainer::new(&c, env)?.run()
}
