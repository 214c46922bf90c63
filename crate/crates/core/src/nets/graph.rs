//! Reverse-mode differentiation over dense row-major matrices.
//!
//! A [`Graph`] is built fresh for every loss evaluation. Nodes are appended in
//! evaluation order, so the node list is already topologically sorted and the
//! backward pass is a single reverse sweep. Leaves are either trainable
//! parameters (gradients collected) or constants (frozen networks, data,
//! reparameterization noise). Gradients still flow *through* operations on
//! constants, which is how the actor objective differentiates through frozen
//! critics and a frozen dynamics model.

use ndarray::{s, Array2, Axis, Zip};

use super::params::ParameterSet;
use crate::scalar::Scalar;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    SubRow(Var, Var),
    MulRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    ScaleBy(Var, Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Softplus(Var),
    Square(Var),
    Clamp(Var, T, T),
    Minimum(Var, Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SumCols(Var),
    Sum(Var),
    Mean(Var),
    NormalizeRows(Var),
}

struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Tape of matrix operations.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Array2<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Data, noise or frozen weights: no gradient is collected for this leaf.
    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.leaf(value, false)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Array2<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn row_constant(&mut self, row: &[T]) -> Var {
        let value = Array2::from_shape_vec((1, row.len()), row.to_vec()).expect("row shape");
        self.constant(value)
    }

    pub fn scalar_constant(&mut self, x: T) -> Var {
        self.constant(Array2::from_elem((1, 1), x))
    }

    /// Binds every tensor of `params` as a leaf, in order.
    pub fn bind(&mut self, params: &ParameterSet<T>, trainable: bool) -> Vec<Var> {
        params
            .tensors()
            .map(|t| self.leaf(t.clone(), trainable))
            .collect()
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        let value = self.value(v);
        debug_assert_eq!(value.dim(), (1, 1));
        value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b), &[a, b])
    }

    /// `x + row`, with `row` of shape `(1, m)` broadcast over the rows of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let value = self.value(x) + self.value(row);
        self.push(value, Op::AddRow(x, row), &[x, row])
    }

    pub fn sub_row(&mut self, x: Var, row: Var) -> Var {
        let value = self.value(x) - self.value(row);
        self.push(value, Op::SubRow(x, row), &[x, row])
    }

    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        let value = self.value(x) * self.value(row);
        self.push(value, Op::MulRow(x, row), &[x, row])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x) * c;
        self.push(value, Op::Scale(x, c), &[x])
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -T::one())
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x) + c;
        self.push(value, Op::AddScalar(x), &[x])
    }

    /// `x * s` where `s` is a `(1, 1)` node.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Var {
        let c = self.scalar(s);
        let value = self.value(x) * c;
        self.push(value, Op::ScaleBy(x, s), &[x, s])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| if v > T::zero() { v } else { T::zero() });
        self.push(value, Op::Relu(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.tanh());
        self.push(value, Op::Tanh(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(sigmoid);
        self.push(value, Op::Sigmoid(x), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.exp());
        self.push(value, Op::Exp(x), &[x])
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(softplus);
        self.push(value, Op::Softplus(x), &[x])
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v * v);
        self.push(value, Op::Square(x), &[x])
    }

    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        let value = self.value(x).mapv(|v| v.max(lo).min(hi));
        self.push(value, Op::Clamp(x, lo, hi), &[x])
    }

    /// Elementwise minimum. Ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        Zip::from(&mut value)
            .and(self.value(b))
            .for_each(|x, &y| {
                if y < *x {
                    *x = y
                }
            });
        self.push(value, Op::Minimum(a, b), &[a, b])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat rows agree");
        self.push(value, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Var {
        let value = self.value(x).slice(s![.., start..start + width]).to_owned();
        self.push(value, Op::SliceCols(x, start), &[x])
    }

    /// Row sums, shape `(n, 1)`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let value = self.value(x).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(value, Op::SumCols(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(x).sum());
        self.push(value, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = T::lit(self.value(x).len() as f64);
        let value = Array2::from_elem((1, 1), self.value(x).sum() / n);
        self.push(value, Op::Mean(x), &[x])
    }

    /// Scales every row to unit Euclidean norm. Callers must rule out zero rows.
    pub fn normalize_rows(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for mut row in value.rows_mut() {
            let norm = row.dot(&row).sqrt();
            row.mapv_inplace(|v| v / norm);
        }
        self.push(value, Op::NormalizeRows(x), &[x])
    }

    /// Gradients of the `(1, 1)` node `out` with respect to every trainable leaf.
    pub fn backward(&self, out: Var) -> Gradients<T> {
        assert_eq!(self.shape(out), (1, 1), "backward needs a scalar output");
        let n = out.0 + 1;
        let mut grads: Vec<Option<Array2<T>>> = (0..n).map(|_| None).collect();
        grads[out.0] = Some(Array2::ones((1, 1)));

        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let y = &node.value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    if self.requires_grad(*a) {
                        let ga = g.dot(&self.value(*b).t());
                        self.accumulate(&mut grads, *a, ga);
                    }
                    if self.requires_grad(*b) {
                        let gb = self.value(*a).t().dot(&g);
                        self.accumulate(&mut grads, *b, gb);
                    }
                }
                Op::AddRow(x, row) | Op::SubRow(x, row) => {
                    if self.requires_grad(*row) {
                        let mut gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        if matches!(node.op, Op::SubRow(..)) {
                            gr.mapv_inplace(|v| -v);
                        }
                        self.accumulate(&mut grads, *row, gr);
                    }
                    self.accumulate(&mut grads, *x, g);
                }
                Op::MulRow(x, row) => {
                    if self.requires_grad(*row) {
                        let gr = (&g * self.value(*x)).sum_axis(Axis(0)).insert_axis(Axis(0));
                        self.accumulate(&mut grads, *row, gr);
                    }
                    if self.requires_grad(*x) {
                        let gx = &g * self.value(*row);
                        self.accumulate(&mut grads, *x, gx);
                    }
                }
                Op::Add(a, b) => {
                    if self.requires_grad(*b) {
                        self.accumulate(&mut grads, *b, g.clone());
                    }
                    self.accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    if self.requires_grad(*b) {
                        self.accumulate(&mut grads, *b, g.mapv(|v| -v));
                    }
                    self.accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    if self.requires_grad(*a) {
                        let ga = &g * self.value(*b);
                        self.accumulate(&mut grads, *a, ga);
                    }
                    if self.requires_grad(*b) {
                        let gb = &g * self.value(*a);
                        self.accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Scale(x, c) => {
                    let c = *c;
                    self.accumulate(&mut grads, *x, g.mapv(|v| v * c));
                }
                Op::AddScalar(x) => self.accumulate(&mut grads, *x, g),
                Op::ScaleBy(x, sc) => {
                    if self.requires_grad(*sc) {
                        let gs = (&g * self.value(*x)).sum();
                        self.accumulate(&mut grads, *sc, Array2::from_elem((1, 1), gs));
                    }
                    if self.requires_grad(*x) {
                        let c = self.scalar(*sc);
                        self.accumulate(&mut grads, *x, g.mapv(|v| v * c));
                    }
                }
                Op::Relu(x) => {
                    let mut gx = g;
                    Zip::from(&mut gx).and(y).for_each(|d, &v| {
                        if v <= T::zero() {
                            *d = T::zero()
                        }
                    });
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::Tanh(x) => {
                    let mut gx = g;
                    Zip::from(&mut gx)
                        .and(y)
                        .for_each(|d, &v| *d *= T::one() - v * v);
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let mut gx = g;
                    Zip::from(&mut gx)
                        .and(y)
                        .for_each(|d, &v| *d *= v * (T::one() - v));
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::Exp(x) => {
                    let gx = &g * y;
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::Softplus(x) => {
                    let mut gx = g;
                    Zip::from(&mut gx)
                        .and(self.value(*x))
                        .for_each(|d, &v| *d *= sigmoid(v));
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::Square(x) => {
                    let two = T::lit(2.0);
                    let mut gx = g;
                    Zip::from(&mut gx)
                        .and(self.value(*x))
                        .for_each(|d, &v| *d *= two * v);
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::Clamp(x, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let mut gx = g;
                    Zip::from(&mut gx).and(self.value(*x)).for_each(|d, &v| {
                        if v < lo || v > hi {
                            *d = T::zero()
                        }
                    });
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::Minimum(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    if self.requires_grad(*b) {
                        let mut gb = g.clone();
                        Zip::from(&mut gb).and(av).and(bv).for_each(|d, &x, &y| {
                            if !(y < x) {
                                *d = T::zero()
                            }
                        });
                        self.accumulate(&mut grads, *b, gb);
                    }
                    if self.requires_grad(*a) {
                        let mut ga = g;
                        Zip::from(&mut ga).and(av).and(bv).for_each(|d, &x, &y| {
                            if y < x {
                                *d = T::zero()
                            }
                        });
                        self.accumulate(&mut grads, *a, ga);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let width = self.value(*p).ncols();
                        if self.requires_grad(*p) {
                            let gp = g.slice(s![.., start..start + width]).to_owned();
                            self.accumulate(&mut grads, *p, gp);
                        }
                        start += width;
                    }
                }
                Op::SliceCols(x, start) => {
                    let mut gx = Array2::zeros(self.shape(*x));
                    let width = g.ncols();
                    gx.slice_mut(s![.., *start..*start + width]).assign(&g);
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::SumCols(x) => {
                    let gx = g
                        .broadcast(self.shape(*x))
                        .expect("broadcast row sums")
                        .to_owned();
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::Sum(x) => {
                    let gx = Array2::from_elem(self.shape(*x), g[[0, 0]]);
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::Mean(x) => {
                    let n = T::lit(self.value(*x).len() as f64);
                    let gx = Array2::from_elem(self.shape(*x), g[[0, 0]] / n);
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::NormalizeRows(x) => {
                    let xv = self.value(*x);
                    let mut gx = Array2::zeros(xv.dim());
                    for (i, mut row) in gx.rows_mut().into_iter().enumerate() {
                        let xr = xv.row(i);
                        let norm = xr.dot(&xr).sqrt();
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let proj = gr.dot(&yr);
                        Zip::from(&mut row)
                            .and(&gr)
                            .and(&yr)
                            .for_each(|d, &gv, &yv| *d = (gv - yv * proj) / norm);
                    }
                    self.accumulate(&mut grads, *x, gx);
                }
            }
        }

        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Array2<T>>], target: Var, g: Array2<T>) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        match &mut grads[target.0] {
            Some(existing) => *existing += &g,
            slot @ None => *slot = Some(g),
        }
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Array2<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients for a bound parameter list; leaves the loss never touched get zeros.
    pub fn collect(&self, graph: &Graph<T>, vars: &[Var]) -> Vec<Array2<T>> {
        vars.iter()
            .map(|v| {
                self.get(*v)
                    .cloned()
                    .unwrap_or_else(|| Array2::zeros(graph.shape(*v)))
            })
            .collect()
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub(crate) fn softplus<T: Scalar>(v: T) -> T {
    v.max(T::zero()) + (-v.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn numeric<F: Fn(&Array2<f64>) -> f64>(f: F, x: &Array2<f64>) -> Array2<f64> {
        let eps = 1e-6;
        let mut out = Array2::zeros(x.dim());
        for idx in 0..x.len() {
            let mut p = x.clone();
            let mut m = x.clone();
            p.as_slice_mut().unwrap()[idx] += eps;
            m.as_slice_mut().unwrap()[idx] -= eps;
            out.as_slice_mut().unwrap()[idx] = (f(&p) - f(&m)) / (2.0 * eps);
        }
        out
    }

    fn assert_close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn matmul_and_row_ops_match_finite_differences() {
        let w = array![[0.3, -0.2, 0.5], [0.1, 0.4, -0.7]];
        let x = array![[1.0, 2.0], [-0.5, 0.25], [0.3, -1.2]];
        let row = array![[0.1, -0.3, 0.2]];
        let f = |w: &Array2<f64>| {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let wv = g.param(w.clone());
            let r = g.constant(row.clone());
            let h = g.matmul(xv, wv);
            let h = g.add_row(h, r);
            let h = g.tanh(h);
            let h = g.mul_row(h, r);
            let h = g.softplus(h);
            let out = g.sum(h);
            g.scalar(out)
        };
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let wv = g.param(w.clone());
        let r = g.constant(row.clone());
        let h = g.matmul(xv, wv);
        let h = g.add_row(h, r);
        let h = g.tanh(h);
        let h = g.mul_row(h, r);
        let h = g.softplus(h);
        let out = g.sum(h);
        let grads = g.backward(out);
        assert_close(grads.get(wv).unwrap(), &numeric(f, &w), 1e-8);
    }

    #[test]
    fn normalize_rows_gradient() {
        let x = array![[0.3, -1.2, 0.5], [2.0, 0.1, -0.4]];
        let t = array![[1.0, 0.5, -0.2], [0.0, 1.0, 1.0]];
        let build = |g: &mut Graph<f64>, x: &Array2<f64>| {
            let xv = g.param(x.clone());
            let tv = g.constant(t.clone());
            let n = g.normalize_rows(xv);
            let p = g.mul(n, tv);
            let out = g.sum(p);
            (xv, out)
        };
        let f = |x: &Array2<f64>| {
            let mut g = Graph::new();
            let (_, out) = build(&mut g, x);
            g.scalar(out)
        };
        let mut g = Graph::new();
        let (xv, out) = build(&mut g, &x);
        let grads = g.backward(out);
        assert_close(grads.get(xv).unwrap(), &numeric(f, &x), 1e-8);
    }

    #[test]
    fn minimum_routes_gradient_to_smaller_input() {
        let mut g = Graph::new();
        let a = g.param(array![[1.0, 5.0]]);
        let b = g.param(array![[2.0, 3.0]]);
        let m = g.minimum(a, b);
        assert_eq!(g.value(m), &array![[1.0, 3.0]]);
        let out = g.sum(m);
        let grads = g.backward(out);
        assert_eq!(grads.get(a).unwrap(), &array![[1.0, 0.0]]);
        assert_eq!(grads.get(b).unwrap(), &array![[0.0, 1.0]]);
    }

    #[test]
    fn constants_receive_no_gradient_but_pass_it_through() {
        let mut g = Graph::new();
        let w = g.constant(array![[2.0]]);
        let x = g.param(array![[3.0]]);
        let y = g.matmul(x, w);
        let out = g.sum(y);
        let grads = g.backward(out);
        assert!(grads.get(w).is_none());
        assert_eq!(grads.get(x).unwrap()[[0, 0]], 2.0);
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        assert!((softplus(800.0_f64) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0_f64) >= 0.0);
        assert!((softplus(0.0_f64) - 2f64.ln()).abs() < 1e-15);
    }
}
