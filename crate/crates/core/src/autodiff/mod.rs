//! Reverse-mode automatic differentiation on a dynamic tape.
//!
//! A [`Graph`] records operations as they execute (define-by-run); calling
//! [`Graph::backward`] replays the tape in reverse insertion order and leaves
//! d(loss)/d(leaf) on every leaf created with [`Graph::param`]. Everything is
//! 64-bit floats. Tensors are dense, row-major, and never mutated once an
//! operation has consumed them; a graph is confined to one thread.

mod adam;
pub mod gradcheck;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

use crate::error::{Error, Result};

/// Dense n-dimensional value: `shape` with row-major `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || n != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Matmul { a: Var, b: Var, m: usize, k: usize, n: usize },
    AddBias { x: Var, bias: Var, rows: usize, cols: usize },
    Relu(Var),
    Sigmoid(Var),
    Clamp01(Var),
    Square(Var),
    Mean(Var),
    Sum(Var),
    LogSoftmax { x: Var, rows: usize, cols: usize },
    NllRows { logits: Var, labels: Vec<usize>, rows: usize, cols: usize },
    OuterRows { a: Var, b: Var, rows: usize, n: usize, m: usize },
    Reshape(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    /// Gradient requested on this leaf explicitly.
    requires_grad: bool,
    /// Gradient must flow through this node (requires_grad somewhere below).
    needs_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Dynamic tape of operations, replayed in exact reverse insertion order.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Constant leaf; no gradient is accumulated for it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false, false)
    }

    /// Differentiable leaf; `grad()` is populated after `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true, true)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.leaf(Tensor::scalar(x))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward pass w.r.t. `v`, if one was computed.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            needs_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn check_live(&self, op: &'static str) -> Result<()> {
        if self.backward_done {
            return Err(Error::Graph(format!(
                "{op}: graph already consumed by backward; build a new graph"
            )));
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn record(&mut self, value: Tensor, op: Op, needs: bool) -> Var {
        self.push(value, op, false, needs)
    }

    // ── elementwise binary ops (equal shapes or scalar broadcast) ──────

    fn binary_shapes(&self, op: &'static str, a: Var, b: Var) -> Result<Vec<usize>> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() == tb.shape() {
            Ok(ta.shape().to_vec())
        } else if tb.is_scalar() {
            Ok(ta.shape().to_vec())
        } else if ta.is_scalar() {
            Ok(tb.shape().to_vec())
        } else {
            Err(Error::Shape {
                op,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            })
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live("add")?;
        let shape = self.binary_shapes("add", a, b)?;
        let (xa, xb) = (self.data(a), self.data(b));
        let data = ew(xa, xb, |u, v| u + v);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.record(Tensor { shape, data }, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live("sub")?;
        let shape = self.binary_shapes("sub", a, b)?;
        let (xa, xb) = (self.data(a), self.data(b));
        let data = ew(xa, xb, |u, v| u - v);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.record(Tensor { shape, data }, Op::Sub(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live("mul")?;
        let shape = self.binary_shapes("mul", a, b)?;
        let (xa, xb) = (self.data(a), self.data(b));
        let data = ew(xa, xb, |u, v| u * v);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.record(Tensor { shape, data }, Op::Mul(a, b), needs))
    }

    /// Multiply by a compile-time constant (not a graph node).
    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.check_live("scale")?;
        let t = self.value(x);
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| v * c).collect(),
        };
        let needs = self.needs(x);
        Ok(self.record(out, Op::Scale(x, c), needs))
    }

    // ── unary elementwise ──────────────────────────────────────────────

    fn unary(
        &mut self,
        name: &'static str,
        x: Var,
        f: impl Fn(f64) -> f64,
        op: impl Fn(Var) -> Op,
    ) -> Result<Var> {
        self.check_live(name)?;
        let t = self.value(x);
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| f(v)).collect(),
        };
        let needs = self.needs(x);
        Ok(self.record(out, op(x), needs))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary("relu", x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, sigmoid, Op::Sigmoid)
    }

    /// Clip to `[0, 1]`; gradient passes through inside the interval and is
    /// zero outside.
    pub fn clamp01(&mut self, x: Var) -> Result<Var> {
        self.unary("clamp01", x, |v| v.clamp(0.0, 1.0), Op::Clamp01)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary("square", x, |v| v * v, Op::Square)
    }

    // ── reductions ─────────────────────────────────────────────────────

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check_live("sum")?;
        let s: f64 = self.data(x).iter().sum();
        let needs = self.needs(x);
        Ok(self.record(Tensor::scalar(s), Op::Sum(x), needs))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check_live("mean")?;
        let d = self.data(x);
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let needs = self.needs(x);
        Ok(self.record(Tensor::scalar(m), Op::Mean(x), needs))
    }

    // ── linear algebra ─────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live("matmul")?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_kernel(self.data(a), self.data(b), &mut out, m, k, n);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.record(
            Tensor {
                shape: vec![m, n],
                data: out,
            },
            Op::Matmul { a, b, m, k, n },
            needs,
        ))
    }

    /// Row-broadcast add: `[rows, cols] + [cols]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.check_live("add_bias")?;
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() != 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::Shape {
                op: "add_bias",
                lhs: sx.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (rows, cols) = (sx[0], sx[1]);
        let xb = self.data(bias).to_vec();
        let mut data = self.data(x).to_vec();
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c] += xb[c];
            }
        }
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.record(
            Tensor {
                shape: vec![rows, cols],
                data,
            },
            Op::AddBias { x, bias, rows, cols },
            needs,
        ))
    }

    /// Per-row outer product: `[rows, n] ⊗ [rows, m] → [rows, n*m]`.
    pub fn outer_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live("outer_rows")?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(Error::Shape {
                op: "outer_rows",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (rows, n, m) = (sa[0], sa[1], sb[1]);
        let (xa, xb) = (self.data(a), self.data(b));
        let mut data = vec![0.0; rows * n * m];
        for r in 0..rows {
            let ar = &xa[r * n..(r + 1) * n];
            let br = &xb[r * m..(r + 1) * m];
            let or = &mut data[r * n * m..(r + 1) * n * m];
            for i in 0..n {
                let ai = ar[i];
                for j in 0..m {
                    or[i * m + j] = ai * br[j];
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.record(
            Tensor {
                shape: vec![rows, n * m],
                data,
            },
            Op::OuterRows { a, b, rows, n, m },
            needs,
        ))
    }

    /// Reinterpret the shape; element count must match.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        self.check_live("reshape")?;
        let t = self.value(x);
        let n: usize = shape.iter().product();
        if n != t.len() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: t.shape().to_vec(),
                rhs: shape,
            });
        }
        let out = Tensor {
            shape,
            data: t.data().to_vec(),
        };
        let needs = self.needs(x);
        Ok(self.record(out, Op::Reshape(x), needs))
    }

    // ── softmax family ─────────────────────────────────────────────────

    fn rows_cols(&self, op: &'static str, x: Var) -> Result<(usize, usize)> {
        let s = self.shape(x);
        match s.len() {
            1 => Ok((1, s[0])),
            2 => Ok((s[0], s[1])),
            _ => Err(Error::Shape {
                op,
                lhs: s.to_vec(),
                rhs: vec![],
            }),
        }
    }

    /// Row-wise `x - logsumexp(x)`. 1-D input is treated as a single row.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        self.check_live("log_softmax")?;
        let (rows, cols) = self.rows_cols("log_softmax", x)?;
        let xd = self.data(x);
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &xd[r * cols..(r + 1) * cols];
            let lse = log_sum_exp(row);
            for c in 0..cols {
                data[r * cols + c] = row[c] - lse;
            }
        }
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        Ok(self.record(
            Tensor { shape, data },
            Op::LogSoftmax { x, rows, cols },
            needs,
        ))
    }

    /// Per-row negative log-likelihood `-log softmax(logits)[label]`,
    /// returned as a `[rows]` vector (no reduction).
    pub fn nll_rows(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check_live("nll_rows")?;
        let (rows, cols) = self.rows_cols("nll_rows", logits)?;
        if labels.len() != rows {
            return Err(Error::Shape {
                op: "nll_rows",
                lhs: vec![rows, cols],
                rhs: vec![labels.len()],
            });
        }
        for (i, &l) in labels.iter().enumerate() {
            if l >= cols {
                return Err(Error::Data(format!(
                    "nll_rows: label {l} at row {i} out of range for {cols} classes"
                )));
            }
        }
        let xd = self.data(logits);
        let mut data = vec![0.0; rows];
        for r in 0..rows {
            let row = &xd[r * cols..(r + 1) * cols];
            data[r] = log_sum_exp(row) - row[labels[r]];
        }
        let needs = self.needs(logits);
        Ok(self.record(
            Tensor {
                shape: vec![rows],
                data,
            },
            Op::NllRows {
                logits,
                labels: labels.to_vec(),
                rows,
                cols,
            },
            needs,
        ))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let nll = self.nll_rows(logits, labels)?;
        self.mean(nll)
    }

    /// Mean over the batch of `-Σ_c soft[c] · log softmax(logits)[c]`,
    /// the expected cross-entropy against soft label rows.
    pub fn soft_cross_entropy(&mut self, logits: Var, soft: Var) -> Result<Var> {
        let (rows, _) = self.rows_cols("soft_cross_entropy", logits)?;
        if self.shape(logits) != self.shape(soft) {
            return Err(Error::Shape {
                op: "soft_cross_entropy",
                lhs: self.shape(logits).to_vec(),
                rhs: self.shape(soft).to_vec(),
            });
        }
        let ls = self.log_softmax(logits)?;
        let prod = self.mul(ls, soft)?;
        let total = self.sum(prod)?;
        self.scale(total, -1.0 / rows as f64)
    }

    // ── backward ───────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Consumes the graph: a second call, or
    /// recording further ops, is an error.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Graph(
                "backward called twice on the same graph".into(),
            ));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: self.nodes[loss.0].value.shape().to_vec(),
                rhs: vec![1],
            });
        }
        self.backward_done = true;
        self.nodes[loss.0].grad = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad || self.nodes[idx].grad.is_none() {
                continue;
            }
            let op = self.nodes[idx].op.clone();
            let upstream = self.nodes[idx].grad.as_ref().unwrap().clone();
            self.backward_op(idx, &op, &upstream);
        }

        // Leaves that asked for a gradient but received none get zeros.
        for node in &mut self.nodes {
            if node.requires_grad && node.grad.is_none() {
                node.grad = Some(vec![0.0; node.value.len()]);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contrib: &[f64]) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let n = self.nodes[v.0].value.len();
        debug_assert_eq!(contrib.len(), n);
        match &mut self.nodes[v.0].grad {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contrib) {
                    *gi += ci;
                }
            }
            None => self.nodes[v.0].grad = Some(contrib.to_vec()),
        }
    }

    /// Accumulate into a possibly-scalar operand of an elementwise op.
    fn accumulate_broadcast(&mut self, v: Var, contrib: Vec<f64>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        if self.nodes[v.0].value.len() == 1 && contrib.len() != 1 {
            let s: f64 = contrib.iter().sum();
            self.accumulate(v, &[s]);
        } else {
            self.accumulate(v, &contrib);
        }
    }

    fn backward_op(&mut self, idx: usize, op: &Op, d: &[f64]) {
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate_broadcast(a, d.to_vec());
                self.accumulate_broadcast(b, d.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate_broadcast(a, d.to_vec());
                self.accumulate_broadcast(b, d.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let xa = self.data(a).to_vec();
                let xb = self.data(b).to_vec();
                let da = ew_with(d, &xb, |g, v| g * v);
                let db = ew_with(d, &xa, |g, v| g * v);
                self.accumulate_broadcast(a, da);
                self.accumulate_broadcast(b, db);
            }
            Op::Scale(x, c) => {
                let dx: Vec<f64> = d.iter().map(|g| g * c).collect();
                self.accumulate(x, &dx);
            }
            Op::Matmul { a, b, m, k, n } => {
                let xa = self.data(a).to_vec();
                let xb = self.data(b).to_vec();
                if self.nodes[a.0].needs_grad {
                    // dA = dC · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for kk in 0..k {
                            let mut acc = 0.0;
                            let drow = &d[i * n..(i + 1) * n];
                            let brow = &xb[kk * n..(kk + 1) * n];
                            for j in 0..n {
                                acc += drow[j] * brow[j];
                            }
                            da[i * k + kk] = acc;
                        }
                    }
                    self.accumulate(a, &da);
                }
                if self.nodes[b.0].needs_grad {
                    // dB = Aᵀ · dC
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let drow = &d[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let aik = xa[i * k + kk];
                            let brow = &mut db[kk * n..(kk + 1) * n];
                            for j in 0..n {
                                brow[j] += aik * drow[j];
                            }
                        }
                    }
                    self.accumulate(b, &db);
                }
            }
            Op::AddBias { x, bias, rows, cols } => {
                self.accumulate(x, d);
                if self.nodes[bias.0].needs_grad {
                    let mut db = vec![0.0; cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            db[c] += d[r * cols + c];
                        }
                    }
                    self.accumulate(bias, &db);
                }
            }
            Op::Relu(x) => {
                let xd = self.data(x).to_vec();
                let dx: Vec<f64> = d
                    .iter()
                    .zip(&xd)
                    .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(x, &dx);
            }
            Op::Sigmoid(x) => {
                let yd = self.nodes[idx].value.data().to_vec();
                let dx: Vec<f64> = d.iter().zip(&yd).map(|(g, &y)| g * y * (1.0 - y)).collect();
                self.accumulate(x, &dx);
            }
            Op::Clamp01(x) => {
                let xd = self.data(x).to_vec();
                let dx: Vec<f64> = d
                    .iter()
                    .zip(&xd)
                    .map(|(g, &v)| if (0.0..=1.0).contains(&v) { *g } else { 0.0 })
                    .collect();
                self.accumulate(x, &dx);
            }
            Op::Square(x) => {
                let xd = self.data(x).to_vec();
                let dx: Vec<f64> = d.iter().zip(&xd).map(|(g, &v)| g * 2.0 * v).collect();
                self.accumulate(x, &dx);
            }
            Op::Mean(x) => {
                let n = self.nodes[x.0].value.len() as f64;
                let dx = vec![d[0] / n; self.nodes[x.0].value.len()];
                self.accumulate(x, &dx);
            }
            Op::Sum(x) => {
                let dx = vec![d[0]; self.nodes[x.0].value.len()];
                self.accumulate(x, &dx);
            }
            Op::LogSoftmax { x, rows, cols } => {
                let yd = self.nodes[idx].value.data().to_vec();
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    let drow = &d[r * cols..(r + 1) * cols];
                    let yrow = &yd[r * cols..(r + 1) * cols];
                    let dsum: f64 = drow.iter().sum();
                    for c in 0..cols {
                        dx[r * cols + c] = drow[c] - yrow[c].exp() * dsum;
                    }
                }
                self.accumulate(x, &dx);
            }
            Op::NllRows {
                logits,
                ref labels,
                rows,
                cols,
            } => {
                let xd = self.data(logits).to_vec();
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    let row = &xd[r * cols..(r + 1) * cols];
                    let lse = log_sum_exp(row);
                    let g = d[r];
                    for c in 0..cols {
                        let p = (row[c] - lse).exp();
                        dx[r * cols + c] = g * (p - if c == labels[r] { 1.0 } else { 0.0 });
                    }
                }
                self.accumulate(logits, &dx);
            }
            Op::OuterRows { a, b, rows, n, m } => {
                let xa = self.data(a).to_vec();
                let xb = self.data(b).to_vec();
                if self.nodes[a.0].needs_grad {
                    let mut da = vec![0.0; rows * n];
                    for r in 0..rows {
                        let dr = &d[r * n * m..(r + 1) * n * m];
                        let br = &xb[r * m..(r + 1) * m];
                        for i in 0..n {
                            let mut acc = 0.0;
                            for j in 0..m {
                                acc += dr[i * m + j] * br[j];
                            }
                            da[r * n + i] = acc;
                        }
                    }
                    self.accumulate(a, &da);
                }
                if self.nodes[b.0].needs_grad {
                    let mut db = vec![0.0; rows * m];
                    for r in 0..rows {
                        let dr = &d[r * n * m..(r + 1) * n * m];
                        let ar = &xa[r * n..(r + 1) * n];
                        for i in 0..n {
                            let ai = ar[i];
                            for j in 0..m {
                                db[r * m + j] += ai * dr[i * m + j];
                            }
                        }
                    }
                    self.accumulate(b, &db);
                }
            }
            Op::Reshape(x) => {
                self.accumulate(x, d);
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = row.iter().map(|&v| (v - mx).exp()).sum();
    mx + s.ln()
}

/// Elementwise combine with scalar broadcast on either side.
fn ew(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    if a.len() == b.len() {
        a.iter().zip(b).map(|(&u, &v)| f(u, v)).collect()
    } else if b.len() == 1 {
        a.iter().map(|&u| f(u, b[0])).collect()
    } else {
        b.iter().map(|&v| f(a[0], v)).collect()
    }
}

/// Upstream gradient combined with the other operand's value, broadcast-aware.
fn ew_with(d: &[f64], other: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    if d.len() == other.len() {
        d.iter().zip(other).map(|(&g, &v)| f(g, v)).collect()
    } else {
        // `other` is the scalar operand.
        d.iter().map(|&g| f(g, other[0])).collect()
    }
}

fn matmul_kernel(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += aik * brow[j];
            }
        }
    }
}
