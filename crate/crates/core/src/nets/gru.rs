use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::layers::uniform;
use super::params::ParameterSet;
use crate::error::{check_dim, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatedRecurrentCellSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
}

/// Gated recurrent unit with reset gate `r`, update gate `z` and candidate `n`:
///
/// ```text
/// r  = sigmoid(x W_r + b_ir + h U_r + b_hr)
/// z  = sigmoid(x W_z + b_iz + h U_z + b_hz)
/// n  = tanh(x W_n + b_in + r * (h U_n + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
///
/// Gates are packed column-wise `[r | z | n]` into `w_ih`, `w_hh`, `b_ih`, `b_hh`.
/// `h'` is a convex combination of `h` and a tanh output, so a hidden state
/// that starts in `(-1, 1)` stays there.
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    spec: GatedRecurrentCellSpec,
}

impl GruCell {
    pub const NUM_TENSORS: usize = 4;

    pub fn new(spec: GatedRecurrentCellSpec) -> Self {
        assert!(spec.input_dim > 0 && spec.hidden_dim > 0);
        Self { spec }
    }

    pub fn spec(&self) -> &GatedRecurrentCellSpec {
        &self.spec
    }

    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, prefix: &str, rng: &mut R) -> ParameterSet<T> {
        let h = self.spec.hidden_dim;
        let bound = 1.0 / (h as f64).sqrt();
        let mut p = ParameterSet::new();
        p.push(format!("{prefix}.w_ih"), uniform(rng, (self.spec.input_dim, 3 * h), bound));
        p.push(format!("{prefix}.w_hh"), uniform(rng, (h, 3 * h), bound));
        p.push(format!("{prefix}.b_ih"), uniform(rng, (1, 3 * h), bound));
        p.push(format!("{prefix}.b_hh"), uniform(rng, (1, 3 * h), bound));
        p
    }

    pub fn step<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], x: Var, h: Var) -> Var {
        let hd = self.spec.hidden_dim;
        let gi = g.matmul(x, params[0]);
        let gi = g.add_row(gi, params[2]);
        let gh = g.matmul(h, params[1]);
        let gh = g.add_row(gh, params[3]);

        let (ir, iz, in_) = (g.slice_cols(gi, 0, hd), g.slice_cols(gi, hd, hd), g.slice_cols(gi, 2 * hd, hd));
        let (hr, hz, hn) = (g.slice_cols(gh, 0, hd), g.slice_cols(gh, hd, hd), g.slice_cols(gh, 2 * hd, hd));

        let r = g.add(ir, hr);
        let r = g.sigmoid(r);
        let z = g.add(iz, hz);
        let z = g.sigmoid(z);
        let rn = g.mul(r, hn);
        let n = g.add(in_, rn);
        let n = g.tanh(n);
        // h' = n + z * (h - n)
        let diff = g.sub(h, n);
        let zd = g.mul(z, diff);
        g.add(n, zd)
    }

    pub fn unroll<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], h0: Var, inputs: &[Var]) -> Vec<Var> {
        let mut h = h0;
        inputs
            .iter()
            .map(|&x| {
                h = self.step(g, params, x, h);
                h
            })
            .collect()
    }
}

/// Runs the cell over a single input stream and returns every hidden state.
pub fn gru_unroll<T: Scalar>(
    cell: &GruCell,
    params: &ParameterSet<T>,
    initial_hidden: &[T],
    inputs: &[Vec<T>],
) -> Result<Vec<Vec<T>>> {
    check_dim("GRU hidden state", cell.spec.hidden_dim, initial_hidden.len())?;
    for x in inputs {
        check_dim("GRU input", cell.spec.input_dim, x.len())?;
    }
    let mut g = Graph::new();
    let bound = g.bind(params, false);
    let h0 = g.row_constant(initial_hidden);
    let xs: Vec<Var> = inputs.iter().map(|x| g.row_constant(x)).collect();
    let hs = cell.unroll(&mut g, &bound, h0, &xs);
    Ok(hs
        .into_iter()
        .map(|h| g.value(h).iter().copied().collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cell() -> (GruCell, ParameterSet<f64>) {
        let cell = GruCell::new(GatedRecurrentCellSpec {
            input_dim: 2,
            hidden_dim: 6,
        });
        let p = cell.init("gru", &mut ChaCha8Rng::seed_from_u64(3));
        (cell, p)
    }

    fn inputs(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let (cell, p) = cell();
        assert!(gru_unroll(&cell, &p, &[0.0; 6], &[]).unwrap().is_empty());
    }

    #[test]
    fn unroll_is_causal() {
        let (cell, p) = cell();
        let xs = inputs(5, 1);
        let full = gru_unroll(&cell, &p, &[0.1; 6], &xs).unwrap();
        let prefix = gru_unroll(&cell, &p, &[0.1; 6], &xs[..3]).unwrap();
        assert_eq!(full.len(), 5);
        assert_eq!(&full[..3], &prefix[..]);
    }

    #[test]
    fn hidden_state_stays_in_open_unit_interval() {
        let (cell, p) = cell();
        let h0 = [0.9, -0.9, 0.0, 0.5, -0.5, 0.99];
        let hs = gru_unroll(&cell, &p, &h0, &inputs(16, 2)).unwrap();
        assert_eq!(hs.len(), 16);
        for h in hs {
            assert!(h.iter().all(|v| v.is_finite() && v.abs() < 1.0));
        }
    }

    #[test]
    fn saturated_cell_never_leaves_closed_unit_interval() {
        let (cell, mut p) = cell();
        for t in p.tensors_mut() {
            t.mapv_inplace(|v| v * 8.0);
        }
        let hs = gru_unroll(&cell, &p, &[0.0; 6], &inputs(16, 5)).unwrap();
        assert!(hs.iter().flatten().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (cell, p) = cell();
        assert!(gru_unroll(&cell, &p, &[0.0; 6], &[vec![1.0; 3]]).is_err());
        assert!(gru_unroll(&cell, &p, &[0.0; 5], &[]).is_err());
    }
}
