//! Matrix-valued reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value. Parents always
//! have smaller indices than their children, so walking the node list from
//! the loss back to index zero is a reverse topological order and visits
//! each node exactly once.
//!
//! ```
//! use graphirl::numcore::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Matrix::row_vector(vec![1.0, -2.0]));
//! let sq = tape.square(x);
//! let loss = tape.sum(sq);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(x).data(), &[2.0, -4.0]);
//! ```

use super::matrix::{axpy, dot, linear, matmul, squared_distance, Matrix};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// `x · wᵀ + b`
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Square(Var),
    ConcatCols(Var, Var),
    GatherRows(Var, Vec<usize>),
    /// Row `r` of the input is added into output row `segments[r]`.
    SegmentSum {
        x: Var,
        segments: Vec<usize>,
    },
    Sum(Var),
    Mean(Var),
    /// `out[i][j] = ||a_i - b_j||²`
    PairwiseSqDist(Var, Var),
    SoftmaxRows {
        x: Var,
        temperature: f64,
    },
    MatMul(Var, Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that can reach it.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`, or `None` if `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`; all zeros when `v` is off every path to the loss.
    pub fn wrt(&self, v: Var) -> Matrix {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, parents: &[Var]) -> bool {
        parents.iter().any(|p| self.nodes[p.0].needs_grad)
    }

    /// A leaf that receives no gradient (inputs, targets).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let value = linear(self.value(x), self.value(w), self.value(b))?;
        let ng = self.grad_flag(&[x, w, b]);
        Ok(self.push(value, Op::Linear { x, w, b }, ng))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        super::matrix::relu_in_place(&mut value);
        let ng = self.grad_flag(&[x]);
        self.push(value, Op::Relu(x), ng)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let ng = self.grad_flag(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let mut value = self.value(a).clone();
        for (x, y) in value.data_mut().iter_mut().zip(self.value(b).data()) {
            *x -= *y;
        }
        let ng = self.grad_flag(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let mut value = self.value(x).clone();
        value.scale(factor);
        let ng = self.grad_flag(&[x]);
        self.push(value, Op::Scale(x, factor), ng)
    }

    /// Element-wise square.
    pub fn square(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for v in value.data_mut() {
            *v *= *v;
        }
        let ng = self.grad_flag(&[x]);
        self.push(value, Op::Square(x), ng)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(Error::shape(format!("concat: {} rows vs {} rows", va.rows(), vb.rows())));
        }
        let mut value = Matrix::zeros(va.rows(), va.cols() + vb.cols());
        for r in 0..va.rows() {
            let out = value.row_mut(r);
            out[..va.cols()].copy_from_slice(va.row(r));
            out[va.cols()..].copy_from_slice(vb.row(r));
        }
        let ng = self.grad_flag(&[a, b]);
        Ok(self.push(value, Op::ConcatCols(a, b), ng))
    }

    pub fn gather_rows(&mut self, x: Var, indices: Vec<usize>) -> Result<Var> {
        let vx = self.value(x);
        if let Some(&bad) = indices.iter().find(|&&i| i >= vx.rows()) {
            return Err(Error::shape(format!("gather index {bad} out of {} rows", vx.rows())));
        }
        let mut value = Matrix::zeros(indices.len(), vx.cols());
        for (r, &i) in indices.iter().enumerate() {
            value.row_mut(r).copy_from_slice(vx.row(i));
        }
        let ng = self.grad_flag(&[x]);
        Ok(self.push(value, Op::GatherRows(x, indices), ng))
    }

    /// Sums rows into `n_segments` output rows; `segments[r]` names the
    /// destination of input row `r`. Summation runs in input row order.
    pub fn segment_sum(&mut self, x: Var, segments: Vec<usize>, n_segments: usize) -> Result<Var> {
        let vx = self.value(x);
        if segments.len() != vx.rows() {
            return Err(Error::shape(format!("segment map has {} entries for {} rows", segments.len(), vx.rows())));
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= n_segments) {
            return Err(Error::shape(format!("segment {bad} out of {n_segments}")));
        }
        let mut value = Matrix::zeros(n_segments, vx.cols());
        for (r, &s) in segments.iter().enumerate() {
            let src = vx.row(r);
            for (o, v) in value.row_mut(s).iter_mut().zip(src) {
                *o += *v;
            }
        }
        let ng = self.grad_flag(&[x]);
        Ok(self.push(value, Op::SegmentSum { x, segments }, ng))
    }

    /// Sum of all entries, as a `1 × 1` node.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let ng = self.grad_flag(&[x]);
        self.push(Matrix::scalar(s), Op::Sum(x), ng)
    }

    /// Mean of all entries, as a `1 × 1` node. Zero for an empty input.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = if v.is_empty() { 0.0 } else { v.data().iter().sum::<f64>() / v.len() as f64 };
        let ng = self.grad_flag(&[x]);
        self.push(Matrix::scalar(s), Op::Mean(x), ng)
    }

    pub fn pairwise_sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(Error::shape(format!(
                "pairwise distance between {}-dim and {}-dim rows",
                va.cols(),
                vb.cols()
            )));
        }
        let mut value = Matrix::zeros(va.rows(), vb.rows());
        for i in 0..va.rows() {
            for j in 0..vb.rows() {
                value.set(i, j, squared_distance(va.row(i), vb.row(j)));
            }
        }
        let ng = self.grad_flag(&[a, b]);
        Ok(self.push(value, Op::PairwiseSqDist(a, b), ng))
    }

    /// Row-wise `softmax(x / temperature)`.
    pub fn softmax_rows(&mut self, x: Var, temperature: f64) -> Result<Var> {
        if !(temperature > 0.0) {
            return Err(Error::contract(format!("softmax temperature must be positive, got {temperature}")));
        }
        let mut value = self.value(x).clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r), temperature);
        }
        let ng = self.grad_flag(&[x]);
        Ok(self.push(value, Op::SoftmaxRows { x, temperature }, ng))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matmul(self.value(a), self.value(b))?;
        let ng = self.grad_flag(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::contract(format!("backward needs a scalar loss, got a {}x{} node", shape.0, shape.1)));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let g = match &node.op {
                // Leaves keep their gradient for the caller.
                Op::Leaf => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.backprop(&node.op, &node.value, &g, &mut grads);
        }

        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads, shapes: self.nodes.iter().map(|n| n.value.shape()).collect() })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.wants(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop(&self, op: &Op, out: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (vx, vw) = (self.value(*x), self.value(*w));
                if self.wants(*x) {
                    let mut dx = Matrix::zeros(vx.rows(), vx.cols());
                    for r in 0..g.rows() {
                        let dxr = dx.row_mut(r);
                        for (o, &go) in g.row(r).iter().enumerate() {
                            if go != 0.0 {
                                axpy(go, vw.row(o), dxr);
                            }
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                if self.wants(*w) {
                    let mut dw = Matrix::zeros(vw.rows(), vw.cols());
                    for r in 0..g.rows() {
                        let xr = vx.row(r);
                        for (o, &go) in g.row(r).iter().enumerate() {
                            if go != 0.0 {
                                axpy(go, xr, dw.row_mut(o));
                            }
                        }
                    }
                    self.accumulate(grads, *w, dw);
                }
                if self.wants(*b) {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        axpy(1.0, g.row(r), db.data_mut());
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Relu(x) => {
                let mut dx = g.clone();
                for (d, &y) in dx.data_mut().iter_mut().zip(out.data()) {
                    if y <= 0.0 {
                        *d = 0.0;
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                let mut neg = g.clone();
                neg.scale(-1.0);
                self.accumulate(grads, *b, neg);
            }
            Op::Scale(x, factor) => {
                let mut dx = g.clone();
                dx.scale(*factor);
                self.accumulate(grads, *x, dx);
            }
            Op::Square(x) => {
                let mut dx = g.clone();
                for (d, v) in dx.data_mut().iter_mut().zip(self.value(*x).data()) {
                    *d *= 2.0 * v;
                }
                self.accumulate(grads, *x, dx);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let mut da = Matrix::zeros(g.rows(), ca);
                let mut db = Matrix::zeros(g.rows(), cb);
                for r in 0..g.rows() {
                    da.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    db.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                }
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::GatherRows(x, indices) => {
                let vx = self.value(*x);
                let mut dx = Matrix::zeros(vx.rows(), vx.cols());
                for (r, &i) in indices.iter().enumerate() {
                    axpy(1.0, g.row(r), dx.row_mut(i));
                }
                self.accumulate(grads, *x, dx);
            }
            Op::SegmentSum { x, segments } => {
                let mut dx = Matrix::zeros(segments.len(), g.cols());
                for (r, &s) in segments.iter().enumerate() {
                    dx.row_mut(r).copy_from_slice(g.row(s));
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Sum(x) => {
                let (r, c) = self.value(*x).shape();
                self.accumulate(grads, *x, Matrix::filled(r, c, g.data()[0]));
            }
            Op::Mean(x) => {
                let (r, c) = self.value(*x).shape();
                let n = (r * c).max(1) as f64;
                self.accumulate(grads, *x, Matrix::filled(r, c, g.data()[0] / n));
            }
            Op::PairwiseSqDist(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    // da_i = 2 Σ_j g_ij (a_i - b_j)
                    let mut da = Matrix::zeros(va.rows(), va.cols());
                    for i in 0..va.rows() {
                        let gi = g.row(i);
                        let row_sum: f64 = gi.iter().sum();
                        let dai = da.row_mut(i);
                        axpy(2.0 * row_sum, va.row(i), dai);
                        for (j, &gij) in gi.iter().enumerate() {
                            if gij != 0.0 {
                                axpy(-2.0 * gij, vb.row(j), dai);
                            }
                        }
                    }
                    self.accumulate(grads, *a, da);
                }
                if self.wants(*b) {
                    // db_j = -2 Σ_i g_ij (a_i - b_j)
                    let mut db = Matrix::zeros(vb.rows(), vb.cols());
                    for j in 0..vb.rows() {
                        let col_sum: f64 = (0..va.rows()).map(|i| g.get(i, j)).sum();
                        axpy(2.0 * col_sum, vb.row(j), db.row_mut(j));
                    }
                    for i in 0..va.rows() {
                        for (j, &gij) in g.row(i).iter().enumerate() {
                            if gij != 0.0 {
                                axpy(-2.0 * gij, va.row(i), db.row_mut(j));
                            }
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::SoftmaxRows { x, temperature } => {
                let mut dx = Matrix::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let (y, gr) = (out.row(r), g.row(r));
                    let inner = dot(y, gr);
                    for ((d, &yi), &gi) in dx.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *d = yi * (gi - inner) / temperature;
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    // g · bᵀ
                    let mut da = Matrix::zeros(va.rows(), va.cols());
                    for r in 0..g.rows() {
                        let gr = g.row(r);
                        for (k, d) in da.row_mut(r).iter_mut().enumerate() {
                            *d = dot(gr, vb.row(k));
                        }
                    }
                    self.accumulate(grads, *a, da);
                }
                if self.wants(*b) {
                    // aᵀ · g
                    let mut db = Matrix::zeros(vb.rows(), vb.cols());
                    for r in 0..va.rows() {
                        for (k, &ark) in va.row(r).iter().enumerate() {
                            if ark != 0.0 {
                                axpy(ark, g.row(r), db.row_mut(k));
                            }
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
            }
        }
    }
}

/// Numerically stable `softmax(v / temperature)` in place.
pub fn softmax_in_place(v: &mut [f64], temperature: f64) {
    let max = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = ((*x - max) / temperature).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    /// Compares analytic gradients of `build` against central differences
    /// for every entry of every input.
    fn check<F>(inputs: Vec<Matrix>, build: F)
    where
        F: Fn(&mut Tape, &[Var]) -> Var,
    {
        let eval = |values: &[Matrix]| {
            let mut t = Tape::new();
            let vars: Vec<Var> = values.iter().map(|m| t.param(m.clone())).collect();
            let loss = build(&mut t, &vars);
            t.scalar(loss)
        };
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
        let loss = build(&mut tape, &vars);
        let grads = tape.backward(loss).unwrap();

        let h = 1e-5;
        for (k, m) in inputs.iter().enumerate() {
            let analytic = grads.wrt(vars[k]);
            for e in 0..m.len() {
                let mut plus = inputs.clone();
                plus[k].data_mut()[e] += h;
                let mut minus = inputs.clone();
                minus[k].data_mut()[e] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data()[e];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-4, "input {k} entry {e}: analytic {a}, numeric {numeric}");
            }
        }
    }

    #[test]
    fn sum_of_params_has_unit_gradient() {
        let mut tape = Tape::new();
        let p = tape.param(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
        let loss = tape.sum(p);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(p), Matrix::filled(2, 2, 1.0));
    }

    #[test]
    fn quadratic_minimum_has_zero_gradient() {
        let mut tape = Tape::new();
        let c = Matrix::row_vector(vec![0.3, -1.2, 5.0]);
        let x = tape.param(c.clone());
        let target = tape.constant(c);
        let d = tape.sub(x, target).unwrap();
        let sq = tape.square(d);
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        assert!(g.wrt(x).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unreachable_params_get_zero_gradient() {
        let mut tape = Tape::new();
        let used = tape.param(Matrix::row_vector(vec![1.0, 2.0]));
        let unused = tape.param(Matrix::zeros(3, 2));
        let loss = tape.sum(used);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(unused).is_none());
        assert_eq!(g.wrt(unused), Matrix::zeros(3, 2));
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let mut tape = Tape::new();
        let p = tape.param(Matrix::zeros(2, 2));
        assert!(matches!(tape.backward(p), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Matrix::row_vector(vec![1.0]));
        let p = tape.param(Matrix::row_vector(vec![2.0]));
        let s = tape.add(c, p).unwrap();
        let loss = tape.sum(s);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.wrt(p).data(), &[1.0]);
    }

    #[test]
    fn gradient_linear_relu() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        check(vec![random(3, 4, &mut rng), random(5, 4, &mut rng), random(1, 5, &mut rng)], |t, v| {
            let y = t.linear(v[0], v[1], v[2]).unwrap();
            let y = t.relu(y);
            let y = t.square(y);
            t.sum(y)
        });
    }

    #[test]
    fn gradient_concat_gather_segment() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        check(vec![random(3, 2, &mut rng), random(3, 3, &mut rng)], |t, v| {
            let c = t.concat_cols(v[0], v[1]).unwrap();
            let g = t.gather_rows(c, vec![2, 0, 0, 1]).unwrap();
            let s = t.segment_sum(g, vec![1, 0, 1, 1], 2).unwrap();
            let s = t.square(s);
            let m = t.mean(s);
            t.scale(m, 3.0)
        });
    }

    #[test]
    fn gradient_pairwise_softmax_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        check(vec![random(4, 3, &mut rng), random(5, 3, &mut rng)], |t, v| {
            let d = t.pairwise_sq_dist(v[0], v[1]).unwrap();
            let neg = t.scale(d, -1.0);
            let a = t.softmax_rows(neg, 0.7).unwrap();
            let nu = t.matmul(a, v[1]).unwrap();
            let diff = t.sub(nu, v[0]).unwrap();
            let sq = t.square(diff);
            t.sum(sq)
        });
    }

    #[test]
    fn gradient_shared_operand() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        check(vec![random(3, 3, &mut rng)], |t, v| {
            let d = t.pairwise_sq_dist(v[0], v[0]).unwrap();
            let p = t.matmul(d, v[0]).unwrap();
            let q = t.add(p, v[0]).unwrap();
            let q = t.square(q);
            t.mean(q)
        });
    }

    #[test]
    fn softmax_rejects_nonpositive_temperature() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::zeros(1, 3));
        assert!(tape.softmax_rows(x, 0.0).is_err());
        assert!(tape.softmax_rows(x, -1.0).is_err());
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let mut v = vec![-1000.0, 0.0, -1e6];
        softmax_in_place(&mut v, 0.1);
        assert_eq!(v[1], 1.0);
        assert!(v.iter().all(|x| x.is_finite()));
    }
}
