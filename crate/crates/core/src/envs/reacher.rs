use rand::Rng;

use super::{ClosedForm, Clock, Env, EnvSpec, Step};
use crate::error::Result;
use crate::rng::seeded;

/// Point mass on `[-1, 1]^2` steered by commanded velocity with a
/// first-order lag. Observation `[px, py, vx, vy, tx, ty]`; reward is minus
/// the distance to the target; reaching within `radius` terminates.
#[derive(Clone, Debug)]
pub struct PointReacher {
    spec: EnvSpec,
    dynamics: ReacherDynamics,
    obs: Vec<f64>,
    clock: Clock,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReacherDynamics {
    pub dt: f64,
    /// Velocity time constant in seconds.
    pub lag: f64,
    pub max_speed: f64,
    pub radius: f64,
}

impl ReacherDynamics {
    fn distance(obs: &[f64]) -> f64 {
        ((obs[0] - obs[4]).powi(2) + (obs[1] - obs[5]).powi(2)).sqrt()
    }

    pub fn reached(&self, obs: &[f64]) -> bool {
        Self::distance(obs) < self.radius
    }
}

impl ClosedForm for ReacherDynamics {
    fn next_observation(&self, obs: &[f64], action: &[f64]) -> Vec<f64> {
        let k = self.dt / self.lag;
        let mut out = obs.to_vec();
        for i in 0..2 {
            let cmd = self.max_speed * action[i].clamp(-1.0, 1.0);
            let v = obs[2 + i] + k * (cmd - obs[2 + i]);
            let p = obs[i] + v * self.dt;
            if p.abs() > 1.0 {
                out[i] = p.clamp(-1.0, 1.0);
                out[2 + i] = 0.0;
            } else {
                out[i] = p;
                out[2 + i] = v;
            }
        }
        out
    }

    fn reward(&self, obs: &[f64], action: &[f64]) -> f64 {
        -Self::distance(&self.next_observation(obs, action))
    }
}

impl Default for PointReacher {
    fn default() -> Self {
        Self::new()
    }
}

impl PointReacher {
    pub fn new() -> Self {
        let dynamics = ReacherDynamics {
            dt: 0.05,
            lag: 0.1,
            max_speed: 1.0,
            radius: 0.05,
        };
        Self {
            spec: EnvSpec {
                name: "reacher-point".into(),
                state_dim: 6,
                action_dim: 2,
                max_episode_steps: 100,
                dt: dynamics.dt,
            },
            dynamics,
            obs: vec![0.0; 6],
            clock: Clock::default(),
        }
    }

    pub fn set_observation(&mut self, obs: &[f64]) {
        self.obs = obs.to_vec();
        self.clock.reset();
    }
}

impl Env for PointReacher {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Position and target `~ U[-1, 1]^2`, at rest.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = seeded(seed);
        let mut u = || rng.random_range(-1.0..=1.0);
        let (px, py, tx, ty) = (u(), u(), u(), u());
        self.set_observation(&[px, py, 0.0, 0.0, tx, ty]);
        Ok(self.obs.clone())
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let a = self.clock.admit(&self.spec, action)?;
        self.obs = self.dynamics.next_observation(&self.obs, &a);
        let reward = -ReacherDynamics::distance(&self.obs);
        let terminated = self.dynamics.reached(&self.obs);
        let truncated = self.clock.tick(&self.spec, terminated);
        Ok(Step {
            observation: self.obs.clone(),
            reward,
            terminated,
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
