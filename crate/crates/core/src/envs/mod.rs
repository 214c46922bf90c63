//! Environment contract and the bundled analytic environments.
//!
//! Environments work in `f64` environment units. Actions are scaled to
//! `[-1, 1]^d_a`; out-of-range actions are clipped with a one-time warning.

mod external;
mod linear;
mod pendulum;
mod reacher;

pub use external::ExternalEnv;
pub use linear::{LinearSystem, Riccati};
pub use pendulum::Pendulum;
pub use reacher::PointReacher;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, SrlError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub max_episode_steps: usize,
    /// Seconds per primitive step.
    pub dt: f64,
}

/// Outcome of one primitive step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Side-effect free dynamics of an environment whose observation is its
/// full state.
pub trait ClosedForm: Send + Sync {
    fn next_observation(&self, observation: &[f64], action: &[f64]) -> Vec<f64>;
    fn reward(&self, observation: &[f64], action: &[f64]) -> f64;
}

pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts an episode; the initial state depends only on `seed`.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;

    fn step(&mut self, action: &[f64]) -> Result<Step>;

    /// Current observation.
    fn observation(&self) -> Vec<f64>;

    /// A new, independent instance with the same configuration.
    fn fresh(&self) -> Result<Box<dyn Env>>;

    /// Exact dynamics, when the environment has them.
    fn closed_form(&self) -> Option<Box<dyn ClosedForm>> {
        None
    }
}

/// Episode clock and action checks shared by the bundled environments.
#[derive(Clone, Debug, Default)]
pub(crate) struct Clock {
    pub t: usize,
    pub over: bool,
    warned: bool,
}

impl Clock {
    pub fn reset(&mut self) {
        self.t = 0;
        self.over = false;
    }

    /// Validates and clips `action`, refusing to step a finished episode.
    pub fn admit(&mut self, spec: &EnvSpec, action: &[f64]) -> Result<Vec<f64>> {
        if self.over {
            return Err(SrlError::Env(format!("{}: step after episode end; call reset", spec.name)));
        }
        check_dim("action", spec.action_dim, action.len())?;
        if action.iter().any(|a| !a.is_finite()) {
            return Err(SrlError::NonFinite("action".into()));
        }
        if action.iter().any(|a| a.abs() > 1.0) && !self.warned {
            log::warn!("{}: action {:?} outside [-1, 1], clipping", spec.name, action);
            self.warned = true;
        }
        Ok(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect())
    }

    /// Advances the clock and returns `truncated`.
    pub fn tick(&mut self, spec: &EnvSpec, terminated: bool) -> bool {
        self.t += 1;
        let truncated = !terminated && self.t >= spec.max_episode_steps;
        self.over = terminated || truncated;
        truncated
    }
}

/// Result of executing a list of primitive actions.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceOutcome {
    /// Observations after every `k`-th executed action.
    pub observations: Vec<Vec<f64>>,
    /// One reward per executed action.
    pub rewards: Vec<f64>,
    pub done: bool,
    pub terminated: bool,
    /// Observation after the last executed action.
    pub last_observation: Vec<f64>,
}

impl SequenceOutcome {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Executes `actions` in order, recording every `observe_every`-th
/// observation. Stops early when the episode ends.
pub fn execute_sequence(env: &mut dyn Env, actions: &[Vec<f64>], observe_every: usize) -> Result<SequenceOutcome> {
    if observe_every == 0 {
        return Err(SrlError::InvalidArgument("observe_every must be at least 1".into()));
    }
    let mut out = SequenceOutcome {
        observations: Vec::new(),
        rewards: Vec::with_capacity(actions.len()),
        done: false,
        terminated: false,
        last_observation: env.observation(),
    };
    for (i, a) in actions.iter().enumerate() {
        let step = env.step(a)?;
        out.rewards.push(step.reward);
        if (i + 1) % observe_every == 0 {
            out.observations.push(step.observation.clone());
        }
        out.last_observation = step.observation;
        if step.terminated || step.truncated {
            out.done = true;
            out.terminated = step.terminated;
            break;
        }
    }
    Ok(out)
}

/// Looks up an environment by name: `pendulum`, `linear`, `reacher-point`
/// or `external:<id>`. External commands come from `SRL_EXTERNAL_ENV_<ID>`.
pub fn make_env(name: &str) -> Result<Box<dyn Env>> {
    match name {
        "pendulum" => Ok(Box::new(Pendulum::new())),
        "linear" => Ok(Box::new(LinearSystem::default())),
        "reacher-point" => Ok(Box::new(PointReacher::new())),
        other => match other.strip_prefix("external:") {
            Some(id) if !id.is_empty() => Ok(Box::new(ExternalEnv::from_registry(id)?)),
            _ => Err(SrlError::Config(format!(
                "unknown environment `{other}` (expected pendulum, linear, reacher-point or external:<id>)"
            ))),
        },
    }
}
