//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node to the [`Tape`]; [`Tape::backward`] walks
//! the nodes in exact reverse order and accumulates gradients into every
//! node that requires them. A tape is meant to live for a single forward and
//! backward pass; call [`Tape::clear`] (or build a new tape) between
//! optimization steps.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::tensor::{dot, Tensor};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    id: usize,
    tape: u64,
    generation: u64,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// Backward rule for operations defined outside this module.
///
/// Receives the upstream gradient, the forward input values, and a mask of
/// which inputs need a gradient; returns one optional gradient per input.
pub trait CustomBackward {
    fn backward(&self, grad_out: &Tensor, inputs: &[&Tensor], needs_grad: &[bool]) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulTn(Var, Var),
    Add(Var, Var, bool),
    Sub(Var, Var),
    Mul(Var, Var, bool),
    Scale(Var, f64),
    GatherRows(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>, Vec<f64>),
    SpMM(Arc<CsrMatrix>, Var),
    RowSoftmax(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Neg(Var),
    Square(Var),
    ReduceSum(Var),
    Reshape(Var),
    DivRows(Var, Var),
    SoftmaxCrossEntropy(Var, usize),
    Custom(Vec<Var>, Box<dyn CustomBackward>),
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Ordered record of the operations of one forward pass.
pub struct Tape {
    id: u64,
    generation: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    tape: u64,
    generation: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if `var` requires one.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        if var.tape != self.tape || var.generation != self.generation {
            return None;
        }
        self.grads.get(var.id).and_then(Option::as_ref)
    }
}

fn shape_err(op: &'static str, a: Var, b: Var) -> Error {
    Error::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            generation: 0,
            nodes: Vec::new(),
        }
    }

    /// Drops all recorded nodes. Handles from before the call become invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.generation += 1;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.generation != self.generation || v.id >= self.nodes.len() {
            return Err(Error::State("value does not belong to the current tape".into()));
        }
        Ok(())
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        let var = Var {
            id: self.nodes.len(),
            tape: self.id,
            generation: self.generation,
            rows: value.rows(),
            cols: value.cols(),
        };
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        var
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.id].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.id].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        if a.cols != b.rows {
            return Err(shape_err("matmul", a, b));
        }
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, rg, Op::MatMul(a, b)))
    }

    /// `aᵀ · b`.
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        if a.rows != b.rows {
            return Err(shape_err("matmul_tn", a, b));
        }
        let out = self.value(a).matmul_tn(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, rg, Op::MatMulTn(a, b)))
    }

    /// Elementwise sum; `b` may be a single row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let broadcast = match (a.shape() == b.shape(), b.rows == 1 && b.cols == a.cols) {
            (true, _) => false,
            (false, true) => true,
            _ => return Err(shape_err("add", a, b)),
        };
        let mut out = self.value(a).clone();
        let bv = self.value(b);
        if broadcast {
            for r in 0..out.rows() {
                for (o, x) in out.row_mut(r).iter_mut().zip(bv.data()) {
                    *o += x;
                }
            }
        } else {
            out.add_assign(bv);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, rg, Op::Add(a, b, broadcast)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        if a.shape() != b.shape() {
            return Err(shape_err("sub", a, b));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::from_vec(a.rows, a.cols, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, rg, Op::Sub(a, b)))
    }

    /// Elementwise product; `b` may be a single row broadcast over the rows of `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let broadcast = match (a.shape() == b.shape(), b.rows == 1 && b.cols == a.cols) {
            (true, _) => false,
            (false, true) => true,
            _ => return Err(shape_err("mul", a, b)),
        };
        let mut out = self.value(a).clone();
        let bv = self.value(b);
        if broadcast {
            for r in 0..out.rows() {
                for (o, x) in out.row_mut(r).iter_mut().zip(bv.data()) {
                    *o *= x;
                }
            }
        } else {
            for (o, x) in out.data_mut().iter_mut().zip(bv.data()) {
                *o *= x;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, rg, Op::Mul(a, b, broadcast)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::Scale(a, s)))
    }

    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        self.check(a)?;
        if let Some(&bad) = index.iter().find(|&&i| i >= a.rows) {
            return Err(Error::Argument(format!("gather index {bad} out of {} rows", a.rows)));
        }
        let av = self.value(a);
        let mut out = Tensor::zeros(index.len(), a.cols);
        for (r, &i) in index.iter().enumerate() {
            out.row_mut(r).copy_from_slice(av.row(i));
        }
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::GatherRows(a, index.to_vec())))
    }

    /// Sums rows of `a` into `n_segments` output rows by segment id.
    pub fn segment_sum(&mut self, a: Var, segment_ids: &[usize], n_segments: usize) -> Result<Var> {
        self.check(a)?;
        if segment_ids.len() != a.rows {
            return Err(Error::Shape {
                op: "segment_sum",
                left: a.shape(),
                right: (segment_ids.len(), 1),
            });
        }
        if let Some(&bad) = segment_ids.iter().find(|&&s| s >= n_segments) {
            return Err(Error::Argument(format!("segment id {bad} >= {n_segments}")));
        }
        let av = self.value(a);
        let mut out = Tensor::zeros(n_segments, a.cols);
        for (r, &s) in segment_ids.iter().enumerate() {
            for (o, x) in out.row_mut(s).iter_mut().zip(av.row(r)) {
                *o += x;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::SegmentSum(a, segment_ids.to_vec())))
    }

    /// Mean of rows per segment; empty segments yield zero rows.
    pub fn segment_mean(&mut self, a: Var, segment_ids: &[usize], n_segments: usize) -> Result<Var> {
        self.check(a)?;
        if segment_ids.len() != a.rows {
            return Err(Error::Shape {
                op: "segment_mean",
                left: a.shape(),
                right: (segment_ids.len(), 1),
            });
        }
        if let Some(&bad) = segment_ids.iter().find(|&&s| s >= n_segments) {
            return Err(Error::Argument(format!("segment id {bad} >= {n_segments}")));
        }
        let mut counts = vec![0.0; n_segments];
        for &s in segment_ids {
            counts[s] += 1.0;
        }
        let inv: Vec<f64> = counts.iter().map(|&c| if c > 0.0 { 1.0 / c } else { 0.0 }).collect();
        let av = self.value(a);
        let mut out = Tensor::zeros(n_segments, a.cols);
        for (r, &s) in segment_ids.iter().enumerate() {
            for (o, x) in out.row_mut(s).iter_mut().zip(av.row(r)) {
                *o += x;
            }
        }
        for (s, &w) in inv.iter().enumerate() {
            for o in out.row_mut(s) {
                *o *= w;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::SegmentMean(a, segment_ids.to_vec(), inv)))
    }

    /// Product of a constant sparse matrix with `a`.
    pub fn spmm(&mut self, m: Arc<CsrMatrix>, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = m.mul_dense(self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::SpMM(m, a)))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let av = self.value(a);
        let mut out = av.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::RowSoftmax(a)))
    }

    /// `max(slope·x, x)` for `0 < slope < 1`.
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| if x >= 0.0 { x } else { slope * x });
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::LeakyRelu(a, slope)))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::Exp(a)))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| -x);
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::Neg(a)))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| x * x);
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::Square(a)))
    }

    /// Sum of all entries, as a 1×1 value.
    pub fn reduce_sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::ReduceSum(a)))
    }

    /// Row-major reinterpretation with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        self.check(a)?;
        if rows * cols != a.rows * a.cols {
            return Err(Error::Shape {
                op: "reshape",
                left: a.shape(),
                right: (rows, cols),
            });
        }
        let out = Tensor::from_vec(rows, cols, self.value(a).data().to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::Reshape(a)))
    }

    /// Divides each row of `a` by the matching entry of the column `m`.
    /// Rows whose divisor is below `1e-12` are set to zero and carry no gradient.
    pub fn div_rows(&mut self, a: Var, m: Var) -> Result<Var> {
        self.check(a)?;
        self.check(m)?;
        if m.cols != 1 || m.rows != a.rows {
            return Err(shape_err("div_rows", a, m));
        }
        let mut out = self.value(a).clone();
        let mv = self.value(m);
        for r in 0..out.rows() {
            let d = mv.get(r, 0);
            let row = out.row_mut(r);
            if d < EMPTY_MASS {
                row.iter_mut().for_each(|x| *x = 0.0);
            } else {
                row.iter_mut().for_each(|x| *x /= d);
            }
        }
        let rg = self.rg(a) || self.rg(m);
        Ok(self.push(out, rg, Op::DivRows(a, m)))
    }

    /// Cross-entropy of `softmax(logits)` against a class index, via log-sum-exp.
    pub fn softmax_cross_entropy(&mut self, logits: Var, class: usize) -> Result<Var> {
        self.check(logits)?;
        if logits.rows != 1 {
            return Err(Error::Shape {
                op: "softmax_cross_entropy",
                left: logits.shape(),
                right: (1, logits.cols),
            });
        }
        if class >= logits.cols {
            return Err(Error::Argument(format!(
                "class index {class} out of range for {} outputs",
                logits.cols
            )));
        }
        let z = self.value(logits).data();
        let m = z.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let lse = m + z.iter().fold(0.0, |s, &x| s + (x - m).exp()).ln();
        let out = Tensor::scalar(lse - z[class]);
        let rg = self.rg(logits);
        Ok(self.push(out, rg, Op::SoftmaxCrossEntropy(logits, class)))
    }

    /// Records an operation whose forward value was computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, backward: Box<dyn CustomBackward>) -> Result<Var> {
        for &v in inputs {
            self.check(v)?;
        }
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(output, rg, Op::Custom(inputs.to_vec(), backward)))
    }

    /// Reverse pass from a 1×1 output.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        self.check(out)?;
        if out.shape() != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                left: out.shape(),
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[out.id].requires_grad {
            grads[out.id] = Some(Tensor::scalar(1.0));
        }
        for id in (0..=out.id).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.backprop_node(node, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            generation: self.generation,
            grads,
        })
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.id].requires_grad {
            return;
        }
        match &mut grads[v.id] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let ga = g.matmul_nt(self.value(*b))?;
                    self.acc(grads, *a, ga);
                }
                if self.rg(*b) {
                    let gb = self.value(*a).matmul_tn(g)?;
                    self.acc(grads, *b, gb);
                }
            }
            Op::MatMulTn(a, b) => {
                // out = aᵀ b: da = b gᵀ, db = a g
                if self.rg(*a) {
                    let ga = self.value(*b).matmul_nt(g)?;
                    self.acc(grads, *a, ga);
                }
                if self.rg(*b) {
                    let gb = self.value(*a).matmul(g)?;
                    self.acc(grads, *b, gb);
                }
            }
            Op::Add(a, b, broadcast) => {
                if self.rg(*a) {
                    self.acc(grads, *a, g.clone());
                }
                if self.rg(*b) {
                    let gb = if *broadcast { col_sums(g) } else { g.clone() };
                    self.acc(grads, *b, gb);
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    self.acc(grads, *a, g.clone());
                }
                if self.rg(*b) {
                    self.acc(grads, *b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b, broadcast) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.rg(*a) {
                    let mut ga = g.clone();
                    if *broadcast {
                        for r in 0..ga.rows() {
                            for (o, x) in ga.row_mut(r).iter_mut().zip(bv.data()) {
                                *o *= x;
                            }
                        }
                    } else {
                        for (o, x) in ga.data_mut().iter_mut().zip(bv.data()) {
                            *o *= x;
                        }
                    }
                    self.acc(grads, *a, ga);
                }
                if self.rg(*b) {
                    let mut prod = g.clone();
                    for (o, x) in prod.data_mut().iter_mut().zip(av.data()) {
                        *o *= x;
                    }
                    let gb = if *broadcast { col_sums(&prod) } else { prod };
                    self.acc(grads, *b, gb);
                }
            }
            Op::Scale(a, s) => self.acc(grads, *a, g.map(|x| x * s)),
            Op::GatherRows(a, index) => {
                let mut ga = Tensor::zeros(a.rows, a.cols);
                for (r, &i) in index.iter().enumerate() {
                    for (o, x) in ga.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::SegmentSum(a, ids) => {
                let mut ga = Tensor::zeros(a.rows, a.cols);
                for (r, &s) in ids.iter().enumerate() {
                    ga.row_mut(r).copy_from_slice(g.row(s));
                }
                self.acc(grads, *a, ga);
            }
            Op::SegmentMean(a, ids, inv) => {
                let mut ga = Tensor::zeros(a.rows, a.cols);
                for (r, &s) in ids.iter().enumerate() {
                    for (o, x) in ga.row_mut(r).iter_mut().zip(g.row(s)) {
                        *o = x * inv[s];
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::SpMM(m, a) => {
                let ga = m.mul_dense_t(g)?;
                self.acc(grads, *a, ga);
            }
            Op::RowSoftmax(a) => {
                let y = &node.value;
                let mut ga = Tensor::zeros(a.rows, a.cols);
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let inner = dot(yr, gr);
                    for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = yv * (gv - inner);
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let av = self.value(*a);
                let mut ga = g.clone();
                for (o, &x) in ga.data_mut().iter_mut().zip(av.data()) {
                    if x < 0.0 {
                        *o *= slope;
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::Exp(a) => {
                let mut ga = g.clone();
                for (o, &y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                    *o *= y;
                }
                self.acc(grads, *a, ga);
            }
            Op::Neg(a) => self.acc(grads, *a, g.map(|x| -x)),
            Op::Square(a) => {
                let av = self.value(*a);
                let mut ga = g.clone();
                for (o, &x) in ga.data_mut().iter_mut().zip(av.data()) {
                    *o *= 2.0 * x;
                }
                self.acc(grads, *a, ga);
            }
            Op::ReduceSum(a) => self.acc(grads, *a, Tensor::filled(a.rows, a.cols, g.item())),
            Op::Reshape(a) => {
                let ga = Tensor::from_vec(a.rows, a.cols, g.data().to_vec())?;
                self.acc(grads, *a, ga);
            }
            Op::DivRows(a, m) => {
                let av = self.value(*a);
                let mv = self.value(*m);
                if self.rg(*a) {
                    let mut ga = g.clone();
                    for r in 0..ga.rows() {
                        let d = mv.get(r, 0);
                        let w = if d < EMPTY_MASS { 0.0 } else { 1.0 / d };
                        ga.row_mut(r).iter_mut().for_each(|x| *x *= w);
                    }
                    self.acc(grads, *a, ga);
                }
                if self.rg(*m) {
                    let mut gm = Tensor::zeros(m.rows, 1);
                    for r in 0..a.rows {
                        let d = mv.get(r, 0);
                        if d >= EMPTY_MASS {
                            gm.set(r, 0, -dot(g.row(r), av.row(r)) / (d * d));
                        }
                    }
                    self.acc(grads, *m, gm);
                }
            }
            Op::SoftmaxCrossEntropy(a, class) => {
                let z = self.value(*a).data();
                let m = z.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let s = z.iter().fold(0.0, |s, &x| s + (x - m).exp());
                let scale = g.item();
                let data = z
                    .iter()
                    .enumerate()
                    .map(|(k, &x)| scale * ((x - m).exp() / s - if k == *class { 1.0 } else { 0.0 }))
                    .collect();
                self.acc(grads, *a, Tensor::from_vec(1, a.cols, data)?);
            }
            Op::Custom(inputs, bw) => {
                let values: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let needs: Vec<bool> = inputs.iter().map(|v| self.rg(*v)).collect();
                let out = bw.backward(g, &values, &needs);
                for ((v, gi), need) in inputs.iter().zip(out).zip(needs) {
                    if let (Some(gi), true) = (gi, need) {
                        if gi.shape() != v.shape() {
                            return Err(Error::Shape {
                                op: "custom backward",
                                left: v.shape(),
                                right: gi.shape(),
                            });
                        }
                        self.acc(grads, *v, gi);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Cluster mass below which a pooled row is treated as empty.
pub const EMPTY_MASS: f64 = 1e-12;

fn col_sums(g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, x) in out.data_mut().iter_mut().zip(g.row(r)) {
            *o += x;
        }
    }
    out
}
