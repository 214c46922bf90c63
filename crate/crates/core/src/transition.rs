use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// One primitive environment step.
///
/// `done` marks true termination only. Hitting the episode time limit sets
/// `truncated` instead, and truncated transitions still bootstrap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub action: Vec<T>,
    pub reward: T,
    pub next_state: Vec<T>,
    pub done: bool,
    #[serde(default)]
    pub truncated: bool,
}

impl<T: Scalar> Transition<T> {
    pub fn new(state: Vec<T>, action: Vec<T>, reward: T, next_state: Vec<T>, done: bool) -> Self {
        Self {
            state,
            action,
            reward,
            next_state,
            done,
            truncated: false,
        }
    }

    pub fn with_truncated(mut self, truncated: bool) -> Self {
        self.truncated = truncated;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.reward.is_finite()
            && self.state.iter().all(|v| v.is_finite())
            && self.action.iter().all(|v| v.is_finite())
            && self.next_state.iter().all(|v| v.is_finite())
    }

    /// Last step of an episode, for either reason.
    pub fn ends_episode(&self) -> bool {
        self.done || self.truncated
    }
}

/// J primitive actions emitted from a single observation.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSequence<T> {
    pub actions: Vec<Vec<T>>,
    pub log_probs: Vec<T>,
    pub origin_state: Vec<T>,
}

impl<T: Scalar> ActionSequence<T> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Column-stacked minibatch. `dones` holds 1 for terminal transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub states: Array2<T>,
    pub actions: Array2<T>,
    pub rewards: Array2<T>,
    pub next_states: Array2<T>,
    pub dones: Array2<T>,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_transitions(ts: &[Transition<T>]) -> Self {
        let n = ts.len();
        let d_s = ts.first().map_or(0, |t| t.state.len());
        let d_a = ts.first().map_or(0, |t| t.action.len());
        let stack = |f: &dyn Fn(&Transition<T>) -> &[T], d: usize| {
            Array2::from_shape_vec((n, d), ts.iter().flat_map(|t| f(t).iter().copied()).collect())
                .expect("consistent transition widths")
        };
        Self {
            states: stack(&|t| &t.state, d_s),
            actions: stack(&|t| &t.action, d_a),
            rewards: Array2::from_shape_vec((n, 1), ts.iter().map(|t| t.reward).collect()).unwrap(),
            next_states: stack(&|t| &t.next_state, d_s),
            dones: Array2::from_shape_vec(
                (n, 1),
                ts.iter().map(|t| if t.done { T::one() } else { T::zero() }).collect(),
            )
            .unwrap(),
        }
    }

    pub fn to_transitions(&self) -> Vec<Transition<T>> {
        (0..self.len())
            .map(|i| Transition {
                state: self.states.row(i).to_vec(),
                action: self.actions.row(i).to_vec(),
                reward: self.rewards[[i, 0]],
                next_state: self.next_states.row(i).to_vec(),
                done: self.dones[[i, 0]] > T::zero(),
                truncated: false,
            })
            .collect()
    }
}

/// `H` consecutive transitions per item, stored step-major: `observations[h]`
/// is the `(n, d_s)` block of observations at offset `h` (`H + 1` blocks),
/// `actions[h]` the actions taken there (`H` blocks).
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch<T> {
    pub observations: Vec<Array2<T>>,
    pub actions: Vec<Array2<T>>,
}

impl<T: Scalar> WindowBatch<T> {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn len(&self) -> usize {
        self.observations.first().map_or(0, |o| o.nrows())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
