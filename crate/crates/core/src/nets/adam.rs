use ndarray::{Array2, Zip};

use super::params::ParameterSet;
use crate::scalar::Scalar;

/// Adam with optional global-norm gradient clipping.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub max_grad_norm: Option<T>,
    step: i32,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            max_grad_norm: None,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn with_clipping(mut self, max_grad_norm: Option<T>) -> Self {
        self.max_grad_norm = max_grad_norm;
        self
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParameterSet<T>, grads: &[Array2<T>]) {
        assert_eq!(params.len(), grads.len(), "one gradient per tensor");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Array2::zeros(g.dim())).collect();
            self.v = grads.iter().map(|g| Array2::zeros(g.dim())).collect();
        }
        let clip = match self.max_grad_norm {
            Some(max) => {
                let norm = grads
                    .iter()
                    .map(|g| g.iter().map(|&x| x * x).sum::<T>())
                    .sum::<T>()
                    .sqrt();
                if norm > max {
                    max / norm
                } else {
                    T::one()
                }
            }
            None => T::one(),
        };
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = T::one() - b1.powi(self.step);
        let bc2 = T::one() - b2.powi(self.step);
        let lr = self.lr;
        let eps = self.eps;
        for (((p, g), m), v) in params
            .tensors_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    let g = g * clip;
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p -= lr * mh / (vh.sqrt() + eps);
                });
        }
    }
}
