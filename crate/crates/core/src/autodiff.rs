//! Matrix-valued reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation eagerly: values are computed as nodes
//! are appended, so the same graph serves as the plain forward pass. Calling
//! [`Graph::backward`] on a `1×1` node walks the tape in reverse and returns
//! the gradient of that scalar with respect to every node that requires one.
//!
//! Nodes created with [`Graph::constant`] (and everything computed only from
//! constants) carry no gradient, which keeps attribution passes from paying
//! for parameter gradients they never read.

use crate::tensor::{dot, Matrix};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Softmax(Var),
    Gather { table: Var, indices: Vec<usize> },
    SliceRows { input: Var, start: usize },
    SoftmaxPick { logits: Var, row: usize, col: usize },
    CrossEntropy { logits: Var, targets: Vec<usize> },
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward sweep, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads[var.0].as_ref()
    }

    pub fn take(&mut self, var: Var) -> Option<Matrix> {
        self.grads[var.0].take()
    }
}

impl Graph {
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

    /// A leaf that gradients flow to.
    pub fn variable(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that gradients do not flow to.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_t(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMulT(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    /// Adds the `1×c` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1, "bias must be a single row");
        assert_eq!(b.cols(), self.value(a).cols(), "bias width mismatch");
        let mut value = self.value(a).clone();
        let b = self.value(bias).row(0).to_vec();
        for i in 0..value.rows() {
            for (x, y) in value.row_mut(i).iter_mut().zip(&b) {
                *x += y;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        self.push(value, Op::AddRow(a, bias), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let value = Matrix::from_vec(va.rows(), va.cols(), data);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    /// Row-wise softmax. With `causal`, entry `(i, j)` for `j > i` is masked out.
    pub fn softmax_rows(&mut self, a: Var, causal: bool) -> Var {
        let x = self.value(a);
        let mut value = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            let width = if causal { (i + 1).min(x.cols()) } else { x.cols() };
            let row = &x.row(i)[..width];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let out = value.row_mut(i);
            let mut total = 0.0;
            for (o, &v) in out.iter_mut().zip(row) {
                *o = (v - max).exp();
                total += *o;
            }
            for o in &mut out[..width] {
                *o /= total;
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::Softmax(a), rg)
    }

    /// Selects rows of `table` by index (embedding lookup).
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Var {
        let t = self.value(table);
        let mut value = Matrix::zeros(indices.len(), t.cols());
        for (r, &idx) in indices.iter().enumerate() {
            value.row_mut(r).copy_from_slice(t.row(idx));
        }
        let rg = self.rg(table);
        self.push(
            value,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            rg,
        )
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice_rows(start, end);
        let rg = self.rg(a);
        self.push(value, Op::SliceRows { input: a, start }, rg)
    }

    /// `softmax(logits[row])[col]` as a `1×1` node.
    pub fn softmax_pick(&mut self, logits: Var, row: usize, col: usize) -> Var {
        let p = crate::tensor::softmax(self.value(logits).row(row))[col];
        let rg = self.rg(logits);
        self.push(
            Matrix::from_vec(1, 1, vec![p]),
            Op::SoftmaxPick { logits, row, col },
            rg,
        )
    }

    /// Mean token negative log-likelihood of `targets` under row-wise softmax.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let l = self.value(logits);
        assert_eq!(l.rows(), targets.len(), "one target per logits row");
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            total -= log_softmax_at(l.row(i), t);
        }
        let loss = total / targets.len().max(1) as f64;
        let rg = self.rg(logits);
        self.push(
            Matrix::from_vec(1, 1, vec![loss]),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            rg,
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Sum(a), rg)
    }

    /// Gradient of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(
            self.value(output).shape(),
            (1, 1),
            "backward needs a scalar output"
        );
        let mut grads: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let ga = matmul_t_skip_zero_rows(g, self.value(*b));
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let gb = self.value(*a).t_matmul(g);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::MatMulT(a, b) => {
                // c = a bᵀ: ga = g b, gb = gᵀ a
                if self.rg(*a) {
                    let ga = g.matmul(self.value(*b));
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let gb = g.t_matmul(self.value(*a));
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, bias) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*bias) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, &v) in gb.row_mut(0).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *bias, gb);
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    let vb = self.value(*b);
                    let data = g.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, Matrix::from_vec(g.rows(), g.cols(), data));
                }
                if self.rg(*b) {
                    let va = self.value(*a);
                    let data = g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, Matrix::from_vec(g.rows(), g.cols(), data));
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.scale(*s)),
            Op::Tanh(a) => {
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(gv, yv)| gv * (1.0 - yv * yv))
                    .collect();
                self.accumulate(grads, *a, Matrix::from_vec(g.rows(), g.cols(), data));
            }
            Op::Softmax(input) => {
                let y = &node.value;
                let mut gx = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let inner = dot(yr, gr);
                    for (o, (&yv, &gv)) in gx.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                        *o = yv * (gv - inner);
                    }
                }
                self.accumulate(grads, *input, gx);
            }
            Op::Gather { table, indices } => {
                let t = self.value(*table);
                let mut gt = Matrix::zeros(t.rows(), t.cols());
                for (r, &idx) in indices.iter().enumerate() {
                    for (o, &v) in gt.row_mut(idx).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *table, gt);
            }
            Op::SliceRows { input, start } => {
                let x = self.value(*input);
                let mut gx = Matrix::zeros(x.rows(), x.cols());
                for i in 0..g.rows() {
                    gx.row_mut(start + i).copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *input, gx);
            }
            Op::SoftmaxPick { logits, row, col } => {
                let l = self.value(*logits);
                let p = crate::tensor::softmax(l.row(*row));
                let pc = p[*col];
                let scale = g.get(0, 0);
                let mut gl = Matrix::zeros(l.rows(), l.cols());
                for (j, (o, &pj)) in gl.row_mut(*row).iter_mut().zip(&p).enumerate() {
                    let delta = if j == *col { 1.0 } else { 0.0 };
                    *o = scale * pc * (delta - pj);
                }
                self.accumulate(grads, *logits, gl);
            }
            Op::CrossEntropy { logits, targets } => {
                let l = self.value(*logits);
                let scale = g.get(0, 0) / targets.len().max(1) as f64;
                let mut gl = Matrix::zeros(l.rows(), l.cols());
                for (i, &t) in targets.iter().enumerate() {
                    let p = crate::tensor::softmax(l.row(i));
                    for (j, (o, pj)) in gl.row_mut(i).iter_mut().zip(p).enumerate() {
                        let delta = if j == t { 1.0 } else { 0.0 };
                        *o = scale * (pj - delta);
                    }
                }
                self.accumulate(grads, *logits, gl);
            }
            Op::Sum(a) => {
                let x = self.value(*a);
                self.accumulate(grads, *a, Matrix::filled(x.rows(), x.cols(), g.get(0, 0)));
            }
        }
    }
}

/// `g · bᵀ`, skipping rows of `g` that are entirely zero.
fn matmul_t_skip_zero_rows(g: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(g.rows(), b.rows());
    for i in 0..g.rows() {
        let gr = g.row(i);
        if gr.iter().all(|&v| v == 0.0) {
            continue;
        }
        for j in 0..b.rows() {
            out.set(i, j, dot(gr, b.row(j)));
        }
    }
    out
}

fn log_softmax_at(row: &[f64], idx: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    row[idx] - lse
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Central finite-difference check of d f / d input for a graph builder.
    fn check(build: impl Fn(&mut Graph, Var) -> Var, input: Matrix) {
        let mut g = Graph::new();
        let x = g.variable(input.clone());
        let y = build(&mut g, x);
        let grads = g.backward(y);
        let analytic = grads.get(x).cloned().unwrap_or(Matrix::zeros(input.rows(), input.cols()));
        let h = 1e-5;
        for i in 0..input.rows() {
            for j in 0..input.cols() {
                let eval = |delta: f64| {
                    let mut m = input.clone();
                    m.set(i, j, m.get(i, j) + delta);
                    let mut g = Graph::new();
                    let x = g.variable(m);
                    let y = build(&mut g, x);
                    g.value(y).get(0, 0)
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic.get(i, j);
                assert!(
                    (a - numeric).abs() <= 1e-6 + 1e-5 * numeric.abs(),
                    "({i},{j}): analytic {a} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn matmul_and_tanh_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random(&mut rng, 4, 3);
        let b = random(&mut rng, 1, 3);
        check(
            move |g, x| {
                let w = g.constant(w.clone());
                let b = g.constant(b.clone());
                let h = g.matmul(x, w);
                let h = g.add_row(h, b);
                let h = g.tanh(h);
                g.sum(h)
            },
            random(&mut rng, 2, 4),
        );
    }

    #[test]
    fn attention_block_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let wq = random(&mut rng, 3, 3);
        for causal in [false, true] {
            let wq = wq.clone();
            check(
                move |g, x| {
                    let wq = g.constant(wq.clone());
                    let q = g.matmul(x, wq);
                    let s = g.matmul_t(q, x);
                    let s = g.scale(s, 0.7);
                    let a = g.softmax_rows(s, causal);
                    let c = g.matmul(a, x);
                    let c = g.mul(c, x);
                    let c = g.slice_rows(c, 1, 3);
                    g.sum(c)
                },
                random(&mut rng, 4, 3),
            );
        }
    }

    #[test]
    fn pick_and_cross_entropy_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        check(|g, x| g.softmax_pick(x, 1, 2), random(&mut rng, 3, 5));
        check(|g, x| g.cross_entropy(x, &[0, 4, 2]), random(&mut rng, 3, 5));
        let table = random(&mut rng, 6, 2);
        check(
            |g, t| {
                let e = g.gather(t, &[5, 0, 5]);
                let e = g.tanh(e);
                g.sum(e)
            },
            table,
        );
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let a = g.constant(Matrix::filled(2, 2, 1.0));
        let x = g.variable(Matrix::filled(2, 2, 0.5));
        let y = g.mul(a, x);
        let s = g.sum(y);
        let grads = g.backward(s);
        assert!(grads.get(a).is_none());
        assert_eq!(grads.get(x).unwrap(), &Matrix::filled(2, 2, 1.0));
    }
}
