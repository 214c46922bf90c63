//! Online planning with a one-step policy: between observations the agent
//! imagines intermediate states with a transition model and queries the
//! policy at each imagined state.

use std::cell::Cell;

use super::{episode_seeds, mean_and_se, Controller, ScoreCurve, POLICY_STREAM};
use crate::dynamics::DynamicsModel;
use crate::envs::{execute_sequence, ClosedForm, Env};
use crate::error::{Result, SrlError};
use crate::rng::stream;
use crate::scalar::{from_f64_slice, to_f64_vec, Scalar};

pub trait TransitionModel {
    fn predict(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>>;
}

/// The environment's own step function.
pub struct GroundTruthModel(pub Box<dyn ClosedForm>);

impl TransitionModel for GroundTruthModel {
    fn predict(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.next_observation(state, action))
    }
}

/// Wraps a model and counts calls.
pub struct CountingModel<M> {
    pub inner: M,
    calls: Cell<u64>,
}

impl<M> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        Self { inner, calls: Cell::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.get()
    }
}

impl<M: TransitionModel> TransitionModel for CountingModel<M> {
    fn predict(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        self.calls.set(self.calls.get() + 1);
        self.inner.predict(state, action)
    }
}

impl<T: Scalar> TransitionModel for DynamicsModel<T> {
    fn predict(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let s: Vec<T> = from_f64_slice(state);
        let a: Vec<T> = from_f64_slice(action);
        Ok(to_f64_vec(&DynamicsModel::predict(self, &s, &a)?))
    }
}

impl<M: TransitionModel + ?Sized> TransitionModel for &M {
    fn predict(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        (**self).predict(state, action)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanningCurve {
    pub curve: ScoreCurve,
    /// Model calls per grid point.
    pub model_calls: Vec<u64>,
    /// Decisions per grid point.
    pub decisions: Vec<u64>,
}

/// For each interval `k`: observe, then for `j < k` pick `a_j` at the
/// current (real or imagined) state and imagine the next state with `model`;
/// the `k` planned actions are then executed open-loop. Exactly `k - 1`
/// model calls per decision, including a decision cut short by the episode end.
pub fn online_planning_eval(
    ctrl: &dyn Controller,
    model: &dyn TransitionModel,
    env: &mut dyn Env,
    grid: &[usize],
    episodes: usize,
    seed: u64,
) -> Result<PlanningCurve> {
    let counted = CountingModel::new(model);
    let mut means = Vec::with_capacity(grid.len());
    let mut errs = Vec::with_capacity(grid.len());
    let mut calls = Vec::with_capacity(grid.len());
    let mut decisions = Vec::with_capacity(grid.len());
    for &k in grid {
        let before = counted.calls();
        let mut n_decisions = 0u64;
        let mut rng = stream(seed, POLICY_STREAM);
        let mut returns = Vec::with_capacity(episodes);
        for s in episode_seeds(seed, episodes) {
            let mut obs = env.reset(s)?;
            let mut previous: Option<Vec<f64>> = None;
            let mut total = 0.0;
            loop {
                n_decisions += 1;
                let mut imagined = obs.clone();
                let mut plan = Vec::with_capacity(k);
                for j in 0..k {
                    let a = ctrl.act(&imagined, 1, true, previous.as_deref(), &mut rng)?.actions.remove(0);
                    if j + 1 < k {
                        imagined = counted.predict(&imagined, &a)?;
                        if imagined.iter().any(|v| !v.is_finite()) {
                            return Err(SrlError::RolloutDiverged { step: j + 1 });
                        }
                    }
                    previous = Some(a.clone());
                    plan.push(a);
                }
                let out = execute_sequence(env, &plan, k)?;
                total = out.rewards.iter().fold(total, |acc, r| acc + r);
                if out.done {
                    break;
                }
                obs = out.last_observation;
            }
            returns.push(total);
        }
        let (m, e) = mean_and_se(&returns);
        means.push(m);
        errs.push(e);
        calls.push(counted.calls() - before);
        decisions.push(n_decisions);
    }
    Ok(PlanningCurve {
        curve: ScoreCurve::new(grid.to_vec(), means, errs, episodes)?,
        model_calls: calls,
        decisions,
    })
}
