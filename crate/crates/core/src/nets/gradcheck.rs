//! Central-difference gradient checking.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParameterSet;
use crate::error::{Result, SrlError};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
}

/// Compares the analytic gradient returned by `loss_fn` with central differences.
///
/// `loss_fn` must be deterministic for a fixed parameter set (fixed data and
/// noise). At most `max_checks` parameters are probed, chosen with a fixed
/// seed; `None` probes all of them. The relative error per parameter is
/// `|a - n| / (|a| + |n| + 1e-8)`.
pub fn grad_check<T, F>(
    mut loss_fn: F,
    params: &ParameterSet<T>,
    epsilon: f64,
    max_checks: Option<usize>,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&ParameterSet<T>) -> Result<(T, Vec<Array2<T>>)>,
{
    let (loss, analytic) = loss_fn(params)?;
    if !loss.is_finite() {
        return Err(SrlError::NonFinite("loss under gradient check".into()));
    }
    let flat: Vec<T> = analytic.iter().flat_map(|g| g.iter().copied()).collect();
    let total = params.num_scalars();
    assert_eq!(flat.len(), total, "gradient layout must match parameters");

    let indices: Vec<usize> = match max_checks {
        Some(k) if k < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x9e37);
            let mut idx = sample(&mut rng, total, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..total).collect(),
    };

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        checked: indices.len(),
    };
    let eps = T::lit(epsilon);
    for &i in &indices {
        let original = probe.scalar_at(i);
        probe.set_scalar_at(i, original + eps);
        let (plus, _) = loss_fn(&probe)?;
        probe.set_scalar_at(i, original - eps);
        let (minus, _) = loss_fn(&probe)?;
        probe.set_scalar_at(i, original);
        if !plus.is_finite() || !minus.is_finite() {
            return Err(SrlError::NonFinite("perturbed loss under gradient check".into()));
        }
        let numeric = (plus.as_f64() - minus.as_f64()) / (2.0 * epsilon);
        let a = flat[i].as_f64();
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-8);
        if rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_index = i;
            report.analytic_at_worst = a;
            report.numeric_at_worst = numeric;
        }
    }
    Ok(report)
}
