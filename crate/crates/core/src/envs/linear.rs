use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{ClosedForm, Clock, Env, EnvSpec, Step};
use crate::error::{Result, SrlError};
use crate::rng::seeded;

/// `s' = A s + B a` with reward `-(s'Qs + a'Ra)`, `Q = I`, `R = r I`.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    spec: EnvSpec,
    dynamics: LinearDynamics,
    state: Vec<f64>,
    clock: Clock,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub action_cost: f64,
}

impl LinearDynamics {
    pub fn apply(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let s = DVector::from_column_slice(s);
        let a = DVector::from_column_slice(a);
        (&self.a * s + &self.b * a).iter().copied().collect()
    }

    pub fn cost(&self, s: &[f64], a: &[f64]) -> f64 {
        s.iter().map(|x| x * x).sum::<f64>() + self.action_cost * a.iter().map(|x| x * x).sum::<f64>()
    }
}

impl ClosedForm for LinearDynamics {
    fn next_observation(&self, obs: &[f64], action: &[f64]) -> Vec<f64> {
        let a: Vec<f64> = action.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        self.apply(obs, &a)
    }

    fn reward(&self, obs: &[f64], action: &[f64]) -> f64 {
        let a: Vec<f64> = action.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        -self.cost(obs, &a)
    }
}

impl Default for LinearSystem {
    /// A slightly unstable, weakly coupled 3-state system driven by 2 inputs.
    fn default() -> Self {
        let a = DMatrix::from_row_slice(3, 3, &[1.01, 0.1, 0.0, 0.0, 0.99, 0.1, 0.05, 0.0, 0.95]);
        let b = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.1, 0.0, 0.0, 0.1]);
        Self::with_matrices(a, b, 0.1).expect("default matrices are well formed")
    }
}

impl LinearSystem {
    pub fn with_matrices(a: DMatrix<f64>, b: DMatrix<f64>, action_cost: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || b.ncols() == 0 || n == 0 {
            return Err(SrlError::InvalidArgument(format!(
                "A must be square and B must have A's rows: A {}x{}, B {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        let m = b.ncols();
        Ok(Self {
            spec: EnvSpec {
                name: "linear".into(),
                state_dim: n,
                action_dim: m,
                max_episode_steps: 100,
                dt: 0.1,
            },
            dynamics: LinearDynamics { a, b, action_cost },
            state: vec![0.0; n],
            clock: Clock::default(),
        })
    }

    pub fn dynamics(&self) -> &LinearDynamics {
        &self.dynamics
    }

    pub fn set_state(&mut self, s: &[f64]) {
        self.state = s.to_vec();
        self.clock.reset();
    }

    /// Finite-horizon LQR for the episode length (actions unconstrained).
    pub fn riccati(&self) -> Riccati {
        Riccati::solve(&self.dynamics, self.spec.max_episode_steps)
    }
}

impl Env for LinearSystem {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Each state coordinate `~ U[-1, 1]`.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = seeded(seed);
        let s: Vec<f64> = (0..self.spec.state_dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        self.set_state(&s);
        Ok(self.state.clone())
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let a = self.clock.admit(&self.spec, action)?;
        let reward = -self.dynamics.cost(&self.state, &a);
        self.state = self.dynamics.apply(&self.state, &a);
        let truncated = self.clock.tick(&self.spec, false);
        Ok(Step {
            observation: self.state.clone(),
            reward,
            terminated: false,
            truncated,
        })
    }

    fn observation(&self) -> Vec<f64> {
        self.state.clone()
    }

    fn fresh(&self) -> Result<Box<dyn Env>> {
        let d = &self.dynamics;
        Ok(Box::new(Self::with_matrices(d.a.clone(), d.b.clone(), d.action_cost)?))
    }

    fn closed_form(&self) -> Option<Box<dyn ClosedForm>> {
        Some(Box::new(self.dynamics.clone()))
    }
}

/// Backward Riccati recursion for cost `sum_t s'Qs + a'Ra` over `T` steps:
///
/// ```text
/// P_T = 0
/// K_t = (R + B'P_{t+1}B)^-1 B'P_{t+1}A
/// P_t = Q + A'P_{t+1}(A - B K_t)
/// ```
///
/// The optimal return from `s_0` is `-s_0' P_0 s_0` with `a_t = -K_t s_t`.
#[derive(Clone, Debug)]
pub struct Riccati {
    pub gains: Vec<DMatrix<f64>>,
    pub p0: DMatrix<f64>,
}

impl Riccati {
    pub fn solve(d: &LinearDynamics, horizon: usize) -> Self {
        let n = d.a.nrows();
        let m = d.b.ncols();
        let q = DMatrix::<f64>::identity(n, n);
        let r = DMatrix::<f64>::identity(m, m) * d.action_cost;
        let mut p = DMatrix::<f64>::zeros(n, n);
        let mut gains = vec![DMatrix::zeros(m, n); horizon];
        for t in (0..horizon).rev() {
            let bt_p = d.b.transpose() * &p;
            let lhs = &r + &bt_p * &d.b;
            let k = lhs
                .lu()
                .solve(&(&bt_p * &d.a))
                .expect("R + B'PB is positive definite");
            p = &q + d.a.transpose() * &p * (&d.a - &d.b * &k);
            p = (&p + p.transpose()) * 0.5;
            gains[t] = k;
        }
        Self { gains, p0: p }
    }

    pub fn optimal_return(&self, s0: &[f64]) -> f64 {
        let s = DVector::from_column_slice(s0);
        -(s.transpose() * &self.p0 * &s)[(0, 0)]
    }

    pub fn action(&self, t: usize, s: &[f64]) -> Vec<f64> {
        (-&self.gains[t] * DVector::from_column_slice(s)).iter().copied().collect()
    }
}
