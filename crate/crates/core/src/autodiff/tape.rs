//! Reverse-mode differentiation over a linear tape of matrix-valued nodes.
//!
//! A [`Tape`] records one forward pass. Every node holds its primal value;
//! [`Tape::backward`] walks the nodes in reverse, accumulating adjoints into
//! zero-initialized buffers. Nodes that do not depend on a trainable leaf are
//! skipped during the reverse sweep.

use super::matrix::Matrix;
use crate::error::{AifError, Result};
use crate::gaussian::LN_2PI;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[r x c] * [r x 1]`, scaling each row.
    MulRows(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Softplus(Var),
    Sqrt(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    /// Per-row Gaussian log-density: `(x, mean, var)`.
    LogProb(Var, Var, Var),
    /// Per-row `KL(q || p)`: `(mean_q, var_q, mean_p, var_p)`.
    Kl(Var, Var, Var, Var),
    /// Per-row Gaussian entropy of a variance matrix.
    Entropy(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Records primal values of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    differentiated: bool,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Adjoint of `v`; all zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Matrix {
        match &self.adjoints[v.0] {
            Some(m) => m.clone(),
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

    /// Trainable leaf: gradients flow into it.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: treated as data.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let n = self.needs(&[a, b]);
        self.push(value, Op::MatMul(a, b), n)
    }

    /// Adds a `1 x c` bias row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1, "bias must be a single row");
        let mut value = self.value(x).clone();
        assert_eq!(value.cols(), b.cols(), "bias width");
        let cols = value.cols();
        for chunk in value.data_mut().chunks_mut(cols) {
            for (v, bb) in chunk.iter_mut().zip(b.data()) {
                *v += bb;
            }
        }
        let n = self.needs(&[x, bias]);
        self.push(value, Op::AddBias(x, bias), n)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let n = self.needs(&[a, b]);
        self.push(value, Op::Add(a, b), n)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let n = self.needs(&[a, b]);
        self.push(value, Op::Sub(a, b), n)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let n = self.needs(&[a, b]);
        self.push(value, Op::Mul(a, b), n)
    }

    /// Scales row `i` of `x` by `w[i, 0]`.
    pub fn mul_rows(&mut self, x: Var, w: Var) -> Var {
        let wv = self.value(w);
        assert_eq!(wv.cols(), 1, "row weights must be a column");
        assert_eq!(wv.rows(), self.value(x).rows(), "row weight count");
        let mut value = self.value(x).clone();
        let cols = value.cols();
        for (chunk, s) in value.data_mut().chunks_mut(cols).zip(wv.data()) {
            chunk.iter_mut().for_each(|v| *v *= s);
        }
        let n = self.needs(&[x, w]);
        self.push(value, Op::MulRows(x, w), n)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        let n = self.needs(&[a]);
        self.push(value, Op::Scale(a, c), n)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        let n = self.needs(&[a]);
        self.push(value, Op::AddScalar(a), n)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let n = self.needs(&[a]);
        self.push(value, Op::Tanh(a), n)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        let n = self.needs(&[a]);
        self.push(value, Op::Softplus(a), n)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        let n = self.needs(&[a]);
        self.push(value, Op::Sqrt(a), n)
    }

    /// Column-wise concatenation; all parts need the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut value = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for p in parts {
                let src = self.value(*p);
                assert_eq!(src.rows(), rows, "concat row count");
                let w = src.cols();
                value.row_mut(r)[offset..offset + w].copy_from_slice(src.row(r));
                offset += w;
            }
        }
        let n = self.needs(parts);
        self.push(value, Op::Concat(parts.to_vec()), n)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let src = self.value(a);
        assert!(start + width <= src.cols(), "slice out of range");
        let mut value = Matrix::zeros(src.rows(), width);
        for r in 0..src.rows() {
            value.row_mut(r).copy_from_slice(&src.row(r)[start..start + width]);
        }
        let n = self.needs(&[a]);
        self.push(value, Op::SliceCols(a, start), n)
    }

    /// `mean + sqrt(var) * noise`, differentiable in `mean` and `var`.
    pub fn reparam(&mut self, mean: Var, var: Var, noise: Var) -> Var {
        let sd = self.sqrt(var);
        let scaled = self.mul(sd, noise);
        self.add(mean, scaled)
    }

    /// Per-row Gaussian log-density, returned as an `r x 1` column.
    pub fn gaussian_log_prob(&mut self, x: Var, mean: Var, var: Var) -> Var {
        let (xv, mv, vv) = (self.value(x), self.value(mean), self.value(var));
        assert_eq!(xv.shape(), mv.shape());
        assert_eq!(xv.shape(), vv.shape());
        let mut out = Matrix::zeros(xv.rows(), 1);
        for r in 0..xv.rows() {
            let s: f64 = xv
                .row(r)
                .iter()
                .zip(mv.row(r))
                .zip(vv.row(r))
                .map(|((x, m), v)| -0.5 * (LN_2PI + v.ln()) - (x - m) * (x - m) / (2.0 * v))
                .sum();
            out.set(r, 0, s);
        }
        let n = self.needs(&[x, mean, var]);
        self.push(out, Op::LogProb(x, mean, var), n)
    }

    /// Per-row `KL(N(mean_q, var_q) || N(mean_p, var_p))` as an `r x 1` column.
    pub fn gaussian_kl(&mut self, mean_q: Var, var_q: Var, mean_p: Var, var_p: Var) -> Var {
        let (mq, vq, mp, vp) = (
            self.value(mean_q),
            self.value(var_q),
            self.value(mean_p),
            self.value(var_p),
        );
        assert_eq!(mq.shape(), vq.shape());
        assert_eq!(mq.shape(), mp.shape());
        assert_eq!(mq.shape(), vp.shape());
        let mut out = Matrix::zeros(mq.rows(), 1);
        for r in 0..mq.rows() {
            let mut s = 0.0;
            for c in 0..mq.cols() {
                let d = mq.get(r, c) - mp.get(r, c);
                let (a, b) = (vq.get(r, c), vp.get(r, c));
                s += (b / a).ln() + (a + d * d) / b - 1.0;
            }
            out.set(r, 0, 0.5 * s);
        }
        let n = self.needs(&[mean_q, var_q, mean_p, var_p]);
        self.push(out, Op::Kl(mean_q, var_q, mean_p, var_p), n)
    }

    /// Per-row Gaussian entropy from a variance matrix, as an `r x 1` column.
    pub fn gaussian_entropy(&mut self, var: Var) -> Var {
        let vv = self.value(var);
        let mut out = Matrix::zeros(vv.rows(), 1);
        for r in 0..vv.rows() {
            let s: f64 = vv.row(r).iter().map(|v| 0.5 * (1.0 + LN_2PI + v.ln())).sum();
            out.set(r, 0, s);
        }
        let n = self.needs(&[var]);
        self.push(out, Op::Entropy(var), n)
    }

    /// Sum of all entries, as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let n = self.needs(&[a]);
        self.push(value, Op::Sum(a), n)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let count = (self.value(a).rows() * self.value(a).cols()) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / count)
    }

    /// Reverse sweep from the scalar `loss`, seeded with `loss_adjoint`.
    ///
    /// A tape supports exactly one backward pass.
    pub fn backward(&mut self, loss: Var, loss_adjoint: f64) -> Result<Gradients> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(AifError::contract("backward called before a forward pass"));
        }
        if self.differentiated {
            return Err(AifError::contract("tape already differentiated; record a new forward pass"));
        }
        if self.nodes[loss.0].value.shape() != (1, 1) {
            return Err(AifError::contract("backward needs a scalar loss node"));
        }
        self.differentiated = true;

        let mut adj: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Matrix::scalar(loss_adjoint));

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            adj[i] = Some(g);
        }

        Ok(Gradients {
            adjoints: adj,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(&self, i: usize, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let mut acc = |v: Var, contrib: Matrix| {
            if !nodes[v.0].needs_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(m) => m.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |v: Var| &nodes[v.0].value;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if nodes[a.0].needs_grad {
                    acc(*a, g.matmul_t(val(*b)));
                }
                if nodes[b.0].needs_grad {
                    acc(*b, val(*a).t_matmul(g));
                }
            }
            Op::AddBias(x, b) => {
                acc(*x, g.clone());
                let mut db = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                acc(*b, db);
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(val(*b), |g, y| g * y));
                acc(*b, g.zip_map(val(*a), |g, x| g * x));
            }
            Op::MulRows(x, w) => {
                let (xv, wv) = (val(*x), val(*w));
                let cols = g.cols();
                let mut dx = g.clone();
                for (chunk, s) in dx.data_mut().chunks_mut(cols).zip(wv.data()) {
                    chunk.iter_mut().for_each(|v| *v *= s);
                }
                acc(*x, dx);
                let mut dw = Matrix::zeros(wv.rows(), 1);
                for r in 0..g.rows() {
                    let s: f64 = g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum();
                    dw.set(r, 0, s);
                }
                acc(*w, dw);
            }
            Op::Scale(a, c) => acc(*a, g.map(|x| x * c)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |g, y| g * (1.0 - y * y))),
            Op::Softplus(a) => acc(*a, g.zip_map(val(*a), |g, x| g * sigmoid(x))),
            Op::Sqrt(a) => acc(*a, g.zip_map(&node.value, |g, y| g / (2.0 * y))),
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = val(*p).cols();
                    let mut part = Matrix::zeros(g.rows(), w);
                    for r in 0..g.rows() {
                        part.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    acc(*p, part);
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let src = val(*a);
                let mut full = Matrix::zeros(src.rows(), src.cols());
                for r in 0..g.rows() {
                    full.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*a, full);
            }
            Op::LogProb(x, m, v) => {
                let (xv, mv, vv) = (val(*x), val(*m), val(*v));
                let (rows, cols) = xv.shape();
                let mut dx = Matrix::zeros(rows, cols);
                let mut dv = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    let gr = g.get(r, 0);
                    for c in 0..cols {
                        let diff = xv.get(r, c) - mv.get(r, c);
                        let var = vv.get(r, c);
                        dx.set(r, c, -gr * diff / var);
                        dv.set(r, c, gr * (-0.5 / var + diff * diff / (2.0 * var * var)));
                    }
                }
                acc(*m, dx.map(|d| -d));
                acc(*x, dx);
                acc(*v, dv);
            }
            Op::Kl(mq, vq, mp, vp) => {
                let (mqv, vqv, mpv, vpv) = (val(*mq), val(*vq), val(*mp), val(*vp));
                let (rows, cols) = mqv.shape();
                let mut dmq = Matrix::zeros(rows, cols);
                let mut dvq = Matrix::zeros(rows, cols);
                let mut dvp = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    let gr = g.get(r, 0);
                    for c in 0..cols {
                        let d = mqv.get(r, c) - mpv.get(r, c);
                        let (a, b) = (vqv.get(r, c), vpv.get(r, c));
                        dmq.set(r, c, gr * d / b);
                        dvq.set(r, c, gr * 0.5 * (1.0 / b - 1.0 / a));
                        dvp.set(r, c, gr * 0.5 * (1.0 / b - (a + d * d) / (b * b)));
                    }
                }
                acc(*mp, dmq.map(|x| -x));
                acc(*mq, dmq);
                acc(*vq, dvq);
                acc(*vp, dvp);
            }
            Op::Entropy(v) => {
                let vv = val(*v);
                let mut dv = Matrix::zeros(vv.rows(), vv.cols());
                for r in 0..vv.rows() {
                    let gr = g.get(r, 0);
                    for c in 0..vv.cols() {
                        dv.set(r, c, gr * 0.5 / vv.get(r, c));
                    }
                }
                acc(*v, dv);
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::filled(r, c, g.get(0, 0)));
            }
        }
    }
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
