use std::f64::consts::PI;

use rand::Rng;

use super::{ClosedForm, Clock, Env, EnvSpec, Step};
use crate::error::Result;
use crate::rng::seeded;

/// Torque-limited swing-up, classic-control conventions.
///
/// Observation `[cos th, sin th, th_dot]` with `th = 0` upright. The
/// observation is the whole state: `th` is recovered with `atan2`, so
/// [`PendulumDynamics`] reproduces [`Pendulum::step`] bit for bit.
#[derive(Clone, Debug)]
pub struct Pendulum {
    spec: EnvSpec,
    dynamics: PendulumDynamics,
    obs: Vec<f64>,
    clock: Clock,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PendulumDynamics {
    pub g: f64,
    pub m: f64,
    pub l: f64,
    pub dt: f64,
    pub max_speed: f64,
    pub max_torque: f64,
}

impl Default for PendulumDynamics {
    fn default() -> Self {
        Self {
            g: 10.0,
            m: 1.0,
            l: 1.0,
            dt: 0.05,
            max_speed: 8.0,
            max_torque: 2.0,
        }
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl PendulumDynamics {
    /// Semi-implicit Euler step on `(th, th_dot)` with scaled action in `[-1, 1]`.
    pub fn integrate(&self, th: f64, th_dot: f64, action: f64) -> (f64, f64) {
        let u = self.max_torque * action.clamp(-1.0, 1.0);
        let acc = 3.0 * self.g / (2.0 * self.l) * th.sin() + 3.0 / (self.m * self.l * self.l) * u;
        let new_dot = (th_dot + acc * self.dt).clamp(-self.max_speed, self.max_speed);
        (th + new_dot * self.dt, new_dot)
    }

    pub fn cost(&self, th: f64, th_dot: f64, action: f64) -> f64 {
        let u = self.max_torque * action.clamp(-1.0, 1.0);
        angle_normalize(th).powi(2) + 0.1 * th_dot * th_dot + 0.001 * u * u
    }
}

impl ClosedForm for PendulumDynamics {
    fn next_observation(&self, obs: &[f64], action: &[f64]) -> Vec<f64> {
        let th = obs[1].atan2(obs[0]);
        let (th2, dot2) = self.integrate(th, obs[2], action[0]);
        vec![th2.cos(), th2.sin(), dot2]
    }

    fn reward(&self, obs: &[f64], action: &[f64]) -> f64 {
        -self.cost(obs[1].atan2(obs[0]), obs[2], action[0])
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Pendulum {
    pub fn new() -> Self {
        let dynamics = PendulumDynamics::default();
        Self {
            spec: EnvSpec {
                name: "pendulum".into(),
                state_dim: 3,
                action_dim: 1,
                max_episode_steps: 200,
                dt: dynamics.dt,
            },
            dynamics,
            obs: vec![1.0, 0.0, 0.0],
            clock: Clock::default(),
        }
    }

    pub fn dynamics(&self) -> &PendulumDynamics {
        &self.dynamics
    }

    /// Places the pendulum at `(th, th_dot)` and restarts the episode clock.
    pub fn set_state(&mut self, th: f64, th_dot: f64) {
        self.obs = vec![th.cos(), th.sin(), th_dot];
        self.clock.reset();
    }

    pub fn angle(&self) -> f64 {
        self.obs[1].atan2(self.obs[0])
    }
}

impl Env for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// `th ~ U[-pi, pi]`, `th_dot ~ U[-1, 1]`.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = seeded(seed);
        let th = rng.random_range(-PI..=PI);
        let th_dot = rng.random_range(-1.0..=1.0);
        self.set_state(th, th_dot);
        Ok(self.obs.clone())
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let a = self.clock.admit(&self.spec, action)?;
        let reward = self.dynamics.reward(&self.obs, &a);
        self.obs = self.dynamics.next_observation(&self.obs, &a);
        let truncated = self.clock.tick(&self.spec, false);
        Ok(Step {
            observation: self.obs.clone(),
            reward,
            terminated: false,
            truncated,
        })
    }

    fn observation(&self) -> Vec<f64> {
        self.obs.clone()
    }

    fn fresh(&self) -> Result<Box<dyn Env>> {
        Ok(Box::new(Self::new()))
    }

    fn closed_form(&self) -> Option<Box<dyn ClosedForm>> {
        Some(Box::new(self.dynamics.clone()))
    }
}
