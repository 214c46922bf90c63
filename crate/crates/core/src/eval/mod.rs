//! Evaluation: fixed and stochastic decision intervals, ASL sweeps, the
//! frequency-averaged score and the online-planning baseline.

mod fas;
mod planning;

pub use fas::{fas, fas_with_axis, mean_and_se, pearson, FasAxis, FasReport, ScoreCurve};
pub use planning::{online_planning_eval, CountingModel, GroundTruthModel, PlanningCurve, TransitionModel};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{execute_sequence, Env};
use crate::error::{Result, SrlError};
use crate::rng::{stream, SrlRng};
use crate::transition::ActionSequence;

/// The default ASL grid for sweeps.
pub const DEFAULT_ASL_GRID: [usize; 9] = [1, 2, 4, 8, 12, 16, 20, 24, 30];

const SEED_STREAM: u64 = 10;
pub(crate) const POLICY_STREAM: u64 = 11;
const SCHEDULE_STREAM: u64 = 12;

/// A policy as seen by evaluation: observation in, `len` actions out.
pub trait Controller {
    fn action_dim(&self) -> usize;

    /// `previous` is the last executed action, `None` at episode start.
    fn act(
        &self,
        observation: &[f64],
        len: usize,
        deterministic: bool,
        previous: Option<&[f64]>,
        rng: &mut SrlRng,
    ) -> Result<ActionSequence<f64>>;
}

/// Uniform random actions in `[-1, 1]^d_a`.
pub struct RandomController {
    pub action_dim: usize,
}

impl Controller for RandomController {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn act(&self, observation: &[f64], len: usize, _: bool, _: Option<&[f64]>, rng: &mut SrlRng) -> Result<ActionSequence<f64>> {
        let lp = -(self.action_dim as f64) * std::f64::consts::LN_2;
        Ok(ActionSequence {
            actions: (0..len)
                .map(|_| (0..self.action_dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
                .collect(),
            log_probs: vec![lp; len],
            origin_state: observation.to_vec(),
        })
    }
}

/// How a decision of interval `k` turns into `k` primitive actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Unroll the policy for `k` actions.
    Sequence,
    /// Repeat the first action `k` times.
    Repeat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean: f64,
    pub std_error: f64,
    pub returns: Vec<f64>,
}

impl EvalSummary {
    fn from_returns(returns: Vec<f64>) -> Self {
        let (mean, std_error) = mean_and_se(&returns);
        Self { mean, std_error, returns }
    }

    /// Sample standard deviation of the episode returns.
    pub fn std_dev(&self) -> f64 {
        self.std_error * (self.returns.len() as f64).sqrt()
    }
}

/// Reset seeds for `n` evaluation episodes derived from `base`.
pub fn episode_seeds(base: u64, n: usize) -> Vec<u64> {
    let mut rng = stream(base, SEED_STREAM);
    (0..n).map(|_| rng.random()).collect()
}

/// Actions for one decision of interval `k`.
pub fn decide(
    ctrl: &dyn Controller,
    obs: &[f64],
    k: usize,
    mode: EvalMode,
    deterministic: bool,
    previous: Option<&[f64]>,
    rng: &mut SrlRng,
) -> Result<Vec<Vec<f64>>> {
    match mode {
        EvalMode::Sequence => Ok(ctrl.act(obs, k, deterministic, previous, rng)?.actions),
        EvalMode::Repeat => {
            let a = ctrl.act(obs, 1, deterministic, previous, rng)?.actions.remove(0);
            Ok(vec![a; k])
        }
    }
}

/// One episode in which the interval before each observation is drawn from
/// `interval`. Returns the undiscounted return and the intervals used.
pub fn run_episode(
    ctrl: &dyn Controller,
    env: &mut dyn Env,
    seed: u64,
    mode: EvalMode,
    deterministic: bool,
    interval: &mut dyn FnMut() -> usize,
    rng: &mut SrlRng,
) -> Result<(f64, Vec<usize>)> {
    let mut obs = env.reset(seed)?;
    let mut previous: Option<Vec<f64>> = None;
    let mut total = 0.0;
    let mut ks = Vec::new();
    loop {
        let k = interval();
        if k == 0 {
            return Err(SrlError::InvalidArgument("decision interval must be at least 1".into()));
        }
        ks.push(k);
        let actions = decide(ctrl, &obs, k, mode, deterministic, previous.as_deref(), rng)?;
        let out = execute_sequence(env, &actions, k)?;
        total = out.rewards.iter().fold(total, |acc, r| acc + r);
        previous = actions.get(out.rewards.len() - 1).cloned();
        obs = out.last_observation;
        if out.done {
            return Ok((total, ks));
        }
    }
}

/// Mean return over `episodes` episodes with a fixed interval `k`.
pub fn evaluate_fixed(
    ctrl: &dyn Controller,
    env: &mut dyn Env,
    k: usize,
    mode: EvalMode,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    let mut rng = stream(seed, POLICY_STREAM);
    let returns = episode_seeds(seed, episodes)
        .into_iter()
        .map(|s| run_episode(ctrl, env, s, mode, true, &mut || k, &mut rng).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_returns(returns))
}

/// Deterministic evaluation observing only every `j_eval`-th state.
pub fn periodic_eval(ctrl: &dyn Controller, env: &mut dyn Env, j_eval: usize, episodes: usize, seed: u64) -> Result<EvalSummary> {
    evaluate_fixed(ctrl, env, j_eval, EvalMode::Sequence, episodes, seed)
}

/// Return of the uniform random policy.
pub fn random_policy_return(env: &mut dyn Env, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let ctrl = RandomController {
        action_dim: env.spec().action_dim,
    };
    let mut rng = stream(seed, POLICY_STREAM);
    let returns = episode_seeds(seed, episodes)
        .into_iter()
        .map(|s| run_episode(&ctrl, env, s, EvalMode::Sequence, false, &mut || 1, &mut rng).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_returns(returns))
}

/// One point per grid value; every point replays the same episode seeds.
pub fn asl_sweep(
    ctrl: &dyn Controller,
    env: &mut dyn Env,
    grid: &[usize],
    episodes: usize,
    mode: EvalMode,
    seed: u64,
) -> Result<ScoreCurve> {
    let mut means = Vec::with_capacity(grid.len());
    let mut errs = Vec::with_capacity(grid.len());
    for &k in grid {
        let s = evaluate_fixed(ctrl, env, k, mode, episodes, seed)?;
        means.push(s.mean);
        errs.push(s.std_error);
    }
    ScoreCurve::new(grid.to_vec(), means, errs, episodes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticEval {
    pub mean_return: f64,
    pub std_error: f64,
    pub returns: Vec<f64>,
    /// Interval drawn at each decision, all episodes concatenated.
    pub intervals: Vec<usize>,
}

/// After every decision the next interval is drawn from `U{lo..=hi}`.
pub fn stochastic_timestep_eval(
    ctrl: &dyn Controller,
    env: &mut dyn Env,
    episodes: usize,
    (lo, hi): (usize, usize),
    mode: EvalMode,
    seed: u64,
) -> Result<StochasticEval> {
    if lo == 0 || lo > hi {
        return Err(SrlError::InvalidArgument(format!("bad interval range [{lo}, {hi}]")));
    }
    let mut rng = stream(seed, POLICY_STREAM);
    let mut schedule = stream(seed, SCHEDULE_STREAM);
    let mut returns = Vec::with_capacity(episodes);
    let mut intervals = Vec::new();
    for s in episode_seeds(seed, episodes) {
        let (ret, ks) = run_episode(ctrl, env, s, mode, true, &mut || schedule.random_range(lo..=hi), &mut rng)?;
        returns.push(ret);
        intervals.extend(ks);
    }
    let (mean_return, std_error) = mean_and_se(&returns);
    Ok(StochasticEval {
        mean_return,
        std_error,
        returns,
        intervals,
    })
}
