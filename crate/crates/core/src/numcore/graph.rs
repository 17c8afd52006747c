//! Tape-based reverse-mode differentiation over 2-D `f64` tensors.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] walks the tape in reverse and accumulates gradients
//! into every node that depends on a parameter leaf. A graph is built for one
//! loss evaluation and then dropped; parameters live in a [`ParamSet`].

use std::collections::BTreeMap;

use super::params::ParamSet;
use super::tensor::{log_softmax_row, matmul_into, matmul_nt_into, matmul_tn_acc, softmax_row, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Tanh(Var),
    Log(Var),
    Softmax(Var, f64),
    LogSoftmax(Var, f64),
    LayerNorm(Var, f64),
    Gather(Var, Vec<usize>),
    Rows(Var, usize),
    ConcatCols(Var, Var),
    StackRows(Vec<Var>),
    MeanRows(Var),
    SumAll(Var),
    WeightedSum(Var, Vec<f64>),
    Pick(Var, usize),
    KlToConst(Var, Vec<f64>),
    StraightThrough(Var),
    Detach,
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// A single-thread computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    leaves: BTreeMap<String, Var>,
}

fn as_matrix(t: Tensor) -> Tensor {
    if t.shape().len() == 2 {
        return t;
    }
    let (r, c) = (t.rows(), t.cols());
    t.reshape(vec![r, c]).expect("row/col view preserves length")
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

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node {
            value: as_matrix(value),
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// A value that never receives gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// A named differentiable leaf. Loading the same name twice returns the same node.
    pub fn leaf(&mut self, name: &str, t: Tensor) -> Var {
        if let Some(&v) = self.leaves.get(name) {
            return v;
        }
        let v = self.push(t, Op::Leaf, true);
        self.leaves.insert(name.to_string(), v);
        v
    }

    /// Load a parameter from `params` as a differentiable leaf.
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<Var> {
        if let Some(&v) = self.leaves.get(name) {
            return Ok(v);
        }
        let t = params
            .get(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter `{name}`")))?
            .clone();
        Ok(self.leaf(name, t))
    }

    /// Load a parameter as a constant: the value is used but no gradient flows to it.
    pub fn frozen_param(&mut self, params: &ParamSet, name: &str) -> Result<Var> {
        let t = params
            .get(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter `{name}`")))?
            .clone();
        Ok(self.constant(t))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((n, k), (k2, m)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(Error::dim(&[n, k], &[k2, m], "matmul inner dimensions"));
        }
        let mut out = vec![0.0; n * m];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b), tracked))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((n, k), (m, k2)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(Error::dim(&[n, k], &[m, k2], "matmul_nt inner dimensions"));
        }
        let mut out = vec![0.0; n * m];
        matmul_nt_into(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MatMulNt(a, b), tracked))
    }

    fn same_shape(&self, a: Var, b: Var, context: &'static str) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(&[sa.0, sa.1], &[sb.0, sb.1], context));
        }
        Ok(sa)
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64, ctx: &'static str) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, ctx)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Tensor::matrix(r, c, data)?, op, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y, "mul")
    }

    /// Broadcast-add a `1×m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let ((n, m), (r, m2)) = (self.shape(a), self.shape(row));
        if r != 1 || m != m2 {
            return Err(Error::dim(&[n, m], &[r, m2], "add_row broadcast"));
        }
        let b = self.value(row).data().to_vec();
        let mut t = self.value(a).clone();
        for i in 0..n {
            for (x, y) in t.row_mut(i).iter_mut().zip(&b) {
                *x += y;
            }
        }
        let tracked = self.tracked(a) || self.tracked(row);
        Ok(self.push(t, Op::AddRow(a, row), tracked))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|v| v * s);
        let tracked = self.tracked(a);
        self.push(t, Op::Scale(a, s), tracked)
    }

    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Result<Var> {
        let (r, cols) = self.shape(a);
        if c.len() != r * cols {
            return Err(Error::dim(&[r, cols], c.shape(), "add_const"));
        }
        let data = self.value(a).data().iter().zip(c.data()).map(|(x, y)| x + y).collect();
        let tracked = self.tracked(a);
        Ok(self.push(Tensor::matrix(r, cols, data)?, Op::AddConst(a), tracked))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::tanh);
        let tracked = self.tracked(a);
        self.push(t, Op::Tanh(a), tracked)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::ln);
        let tracked = self.tracked(a);
        self.push(t, Op::Log(a), tracked)
    }

    fn check_temperature(temperature: f64) -> Result<()> {
        if temperature.is_finite() && temperature > 0.0 {
            Ok(())
        } else {
            Err(Error::Argument(format!("temperature must be > 0, got {temperature}")))
        }
    }

    /// Row-wise `softmax(a / temperature)`.
    pub fn softmax(&mut self, a: Var, temperature: f64) -> Result<Var> {
        Self::check_temperature(temperature)?;
        let mut t = self.value(a).clone();
        for i in 0..t.rows() {
            let row = self.value(a).row(i).to_vec();
            softmax_row(&row, temperature, t.row_mut(i));
        }
        let tracked = self.tracked(a);
        Ok(self.push(t, Op::Softmax(a, temperature), tracked))
    }

    /// Row-wise `log_softmax(a / temperature)`.
    pub fn log_softmax(&mut self, a: Var, temperature: f64) -> Result<Var> {
        Self::check_temperature(temperature)?;
        let mut t = self.value(a).clone();
        for i in 0..t.rows() {
            let row = self.value(a).row(i).to_vec();
            log_softmax_row(&row, temperature, t.row_mut(i));
        }
        let tracked = self.tracked(a);
        Ok(self.push(t, Op::LogSoftmax(a, temperature), tracked))
    }

    /// Row-wise normalization to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let mut t = self.value(a).clone();
        for i in 0..t.rows() {
            let row = t.row_mut(i);
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
        }
        let tracked = self.tracked(a);
        self.push(t, Op::LayerNorm(a, eps), tracked)
    }

    /// Select rows of `table` by index.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.shape(table);
        if ids.is_empty() {
            return Err(Error::Argument("gather with no indices".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Contract(format!(
                "row index {bad} out of range for table of {v} rows"
            )));
        }
        let src = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(src.row(i));
        }
        let tracked = self.tracked(table);
        Ok(self.push(
            Tensor::matrix(ids.len(), d, data)?,
            Op::Gather(table, ids.to_vec()),
            tracked,
        ))
    }

    /// Rows `start..start + len` of `a`.
    pub fn rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (n, m) = self.shape(a);
        if len == 0 || start + len > n {
            return Err(Error::dim(&[n, m], &[start, len], "row slice"));
        }
        let data = self.value(a).data()[start * m..(start + len) * m].to_vec();
        let tracked = self.tracked(a);
        Ok(self.push(Tensor::matrix(len, m, data)?, Op::Rows(a, start), tracked))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((n, p), (n2, q)) = (self.shape(a), self.shape(b));
        if n != n2 {
            return Err(Error::dim(&[n, p], &[n2, q], "concat_cols row counts"));
        }
        let mut data = Vec::with_capacity(n * (p + q));
        for i in 0..n {
            data.extend_from_slice(self.value(a).row(i));
            data.extend_from_slice(self.value(b).row(i));
        }
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Tensor::matrix(n, p + q, data)?, Op::ConcatCols(a, b), tracked))
    }

    /// Concatenate along rows; all inputs share a column count.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Argument("stack_rows with no inputs".into()))?;
        let m = self.shape(first).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if c != m {
                return Err(Error::dim(&[rows, m], &[r, c], "stack_rows column counts"));
            }
            data.extend_from_slice(self.value(p).data());
            rows += r;
        }
        let tracked = parts.iter().any(|&p| self.tracked(p));
        Ok(self.push(Tensor::matrix(rows, m, data)?, Op::StackRows(parts.to_vec()), tracked))
    }

    /// Column-wise mean over rows, giving a `1×m` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let mut out = vec![0.0; m];
        for i in 0..n {
            for (o, v) in out.iter_mut().zip(self.value(a).row(i)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
        let tracked = self.tracked(a);
        self.push(Tensor::vector(out), Op::MeanRows(a), tracked)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let tracked = self.tracked(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), tracked)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// `Σ_i w_i · a_i` with constant weights.
    pub fn weighted_sum(&mut self, a: Var, weights: &[f64]) -> Result<Var> {
        let t = self.value(a);
        if t.len() != weights.len() {
            return Err(Error::dim(t.shape(), &[weights.len()], "weighted_sum"));
        }
        let s = t.data().iter().zip(weights).map(|(x, w)| x * w).sum();
        let tracked = self.tracked(a);
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum(a, weights.to_vec()), tracked))
    }

    /// Element `(row, col)` as a `1×1` node.
    pub fn pick(&mut self, a: Var, row: usize, col: usize) -> Result<Var> {
        let (n, m) = self.shape(a);
        if row >= n || col >= m {
            return Err(Error::dim(&[n, m], &[row, col], "pick index"));
        }
        let flat = row * m + col;
        let v = self.value(a).data()[flat];
        let tracked = self.tracked(a);
        Ok(self.push(Tensor::scalar(v), Op::Pick(a, flat), tracked))
    }

    /// `KL(q ‖ p)` for a single-row distribution `q` and a constant `p`,
    /// with `0 · log 0 := 0`.
    pub fn kl_to_const(&mut self, q: Var, p: &[f64]) -> Result<Var> {
        let qv = self.value(q);
        if qv.len() != p.len() {
            return Err(Error::dim(qv.shape(), &[p.len()], "kl_to_const"));
        }
        let value = super::functional::kl_divergence(qv.data(), p)?;
        let tracked = self.tracked(q);
        Ok(self.push(Tensor::scalar(value), Op::KlToConst(q, p.to_vec()), tracked))
    }

    /// Forward value `hard`, backward identical to `soft`.
    pub fn straight_through(&mut self, soft: Var, hard: Tensor) -> Result<Var> {
        let (r, c) = self.shape(soft);
        if hard.len() != r * c {
            return Err(Error::dim(&[r, c], hard.shape(), "straight_through"));
        }
        let hard = hard.reshape(vec![r, c])?;
        let tracked = self.tracked(soft);
        Ok(self.push(hard, Op::StraightThrough(soft), tracked))
    }

    /// Same value, no gradient flows back through it.
    pub fn detach(&mut self, a: Var) -> Var {
        let t = self.value(a).clone();
        self.push(t, Op::Detach, false)
    }

    /// Reverse sweep from a `1×1` loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut by_name = BTreeMap::new();
        for (name, v) in &self.leaves {
            if let Some(g) = grads[v.0].take() {
                let shape = self.value(*v).shape().to_vec();
                by_name.insert(name.clone(), Tensor::new(shape, g)?);
            }
        }
        Ok(Gradients { by_name })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &node.value;
        match &node.op {
            Op::Constant | Op::Leaf | Op::Detach => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.shape(*a);
                let m = self.shape(*b).1;
                if self.tracked(*a) {
                    let mut tmp = vec![0.0; n * k];
                    matmul_nt_into(g, self.value(*b).data(), &mut tmp, n, m, k);
                    accumulate(grads, *a, &tmp, self.value(*a).len());
                }
                if self.tracked(*b) {
                    let acc = slot(grads, *b, k * m);
                    matmul_tn_acc(self.value(*a).data(), g, acc, n, k, m);
                }
            }
            Op::MatMulNt(a, b) => {
                let (n, k) = self.shape(*a);
                let m = self.shape(*b).0;
                if self.tracked(*a) {
                    let mut tmp = vec![0.0; n * k];
                    matmul_into(g, self.value(*b).data(), &mut tmp, n, m, k);
                    accumulate(grads, *a, &tmp, n * k);
                }
                if self.tracked(*b) {
                    let acc = slot(grads, *b, m * k);
                    matmul_tn_acc(g, self.value(*a).data(), acc, n, m, k);
                }
            }
            Op::Add(a, b) => {
                self.acc_if(grads, *a, g);
                self.acc_if(grads, *b, g);
            }
            Op::Sub(a, b) => {
                self.acc_if(grads, *a, g);
                if self.tracked(*b) {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    accumulate(grads, *b, &neg, neg.len());
                }
            }
            Op::Mul(a, b) => {
                if self.tracked(*a) {
                    let t: Vec<f64> = g.iter().zip(self.value(*b).data()).map(|(x, y)| x * y).collect();
                    accumulate(grads, *a, &t, t.len());
                }
                if self.tracked(*b) {
                    let t: Vec<f64> = g.iter().zip(self.value(*a).data()).map(|(x, y)| x * y).collect();
                    accumulate(grads, *b, &t, t.len());
                }
            }
            Op::AddRow(a, row) => {
                self.acc_if(grads, *a, g);
                if self.tracked(*row) {
                    let m = self.shape(*row).1;
                    let acc = slot(grads, *row, m);
                    for chunk in g.chunks(m) {
                        for (o, v) in acc.iter_mut().zip(chunk) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Scale(a, s) => {
                if self.tracked(*a) {
                    let t: Vec<f64> = g.iter().map(|v| v * s).collect();
                    accumulate(grads, *a, &t, t.len());
                }
            }
            Op::AddConst(a) => self.acc_if(grads, *a, g),
            Op::Tanh(a) => {
                if self.tracked(*a) {
                    let t: Vec<f64> = g.iter().zip(out.data()).map(|(gv, y)| gv * (1.0 - y * y)).collect();
                    accumulate(grads, *a, &t, t.len());
                }
            }
            Op::Log(a) => {
                if self.tracked(*a) {
                    let t: Vec<f64> = g.iter().zip(self.value(*a).data()).map(|(gv, x)| gv / x).collect();
                    accumulate(grads, *a, &t, t.len());
                }
            }
            Op::Softmax(a, temp) => {
                if self.tracked(*a) {
                    let m = out.cols();
                    let mut t = vec![0.0; g.len()];
                    for ((gr, pr), tr) in g.chunks(m).zip(out.data().chunks(m)).zip(t.chunks_mut(m)) {
                        let dot: f64 = gr.iter().zip(pr).map(|(x, y)| x * y).sum();
                        for ((o, gv), p) in tr.iter_mut().zip(gr).zip(pr) {
                            *o = p * (gv - dot) / temp;
                        }
                    }
                    accumulate(grads, *a, &t, t.len());
                }
            }
            Op::LogSoftmax(a, temp) => {
                if self.tracked(*a) {
                    let m = out.cols();
                    let mut t = vec![0.0; g.len()];
                    for ((gr, yr), tr) in g.chunks(m).zip(out.data().chunks(m)).zip(t.chunks_mut(m)) {
                        let total: f64 = gr.iter().sum();
                        for ((o, gv), y) in tr.iter_mut().zip(gr).zip(yr) {
                            *o = (gv - y.exp() * total) / temp;
                        }
                    }
                    accumulate(grads, *a, &t, t.len());
                }
            }
            Op::LayerNorm(a, eps) => {
                if self.tracked(*a) {
                    let m = out.cols();
                    let x = self.value(*a).data();
                    let mut t = vec![0.0; g.len()];
                    for (i, ((gr, yr), tr)) in g.chunks(m).zip(out.data().chunks(m)).zip(t.chunks_mut(m)).enumerate() {
                        let xr = &x[i * m..(i + 1) * m];
                        let n = m as f64;
                        let mean = xr.iter().sum::<f64>() / n;
                        let var = xr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                        let inv = 1.0 / (var + eps).sqrt();
                        let g_mean = gr.iter().sum::<f64>() / n;
                        let gy_mean = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for ((o, gv), y) in tr.iter_mut().zip(gr).zip(yr) {
                            *o = inv * (gv - g_mean - y * gy_mean);
                        }
                    }
                    accumulate(grads, *a, &t, t.len());
                }
            }
            Op::Gather(table, ids) => {
                if self.tracked(*table) {
                    let (v, d) = self.shape(*table);
                    let acc = slot(grads, *table, v * d);
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, gv) in acc[id * d..(id + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]) {
                            *o += gv;
                        }
                    }
                }
            }
            Op::Rows(a, start) => {
                if self.tracked(*a) {
                    let (n, m) = self.shape(*a);
                    let acc = slot(grads, *a, n * m);
                    for (o, gv) in acc[start * m..start * m + g.len()].iter_mut().zip(g) {
                        *o += gv;
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let (n, p) = self.shape(*a);
                let q = self.shape(*b).1;
                if self.tracked(*a) {
                    let acc = slot(grads, *a, n * p);
                    for i in 0..n {
                        for j in 0..p {
                            acc[i * p + j] += g[i * (p + q) + j];
                        }
                    }
                }
                if self.tracked(*b) {
                    let acc = slot(grads, *b, n * q);
                    for i in 0..n {
                        for j in 0..q {
                            acc[i * q + j] += g[i * (p + q) + p + j];
                        }
                    }
                }
            }
            Op::StackRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.tracked(p) {
                        accumulate(grads, p, &g[offset..offset + len], len);
                    }
                    offset += len;
                }
            }
            Op::MeanRows(a) => {
                if self.tracked(*a) {
                    let (n, m) = self.shape(*a);
                    let acc = slot(grads, *a, n * m);
                    for i in 0..n {
                        for j in 0..m {
                            acc[i * m + j] += g[j] / n as f64;
                        }
                    }
                }
            }
            Op::SumAll(a) => {
                if self.tracked(*a) {
                    let len = self.value(*a).len();
                    let acc = slot(grads, *a, len);
                    acc.iter_mut().for_each(|o| *o += g[0]);
                }
            }
            Op::WeightedSum(a, w) => {
                if self.tracked(*a) {
                    let acc = slot(grads, *a, w.len());
                    for (o, wv) in acc.iter_mut().zip(w) {
                        *o += g[0] * wv;
                    }
                }
            }
            Op::Pick(a, flat) => {
                if self.tracked(*a) {
                    let len = self.value(*a).len();
                    slot(grads, *a, len)[*flat] += g[0];
                }
            }
            Op::KlToConst(q, p) => {
                if self.tracked(*q) {
                    let qv = self.value(*q).data();
                    let acc = slot(grads, *q, p.len());
                    for ((o, &qi), &pi) in acc.iter_mut().zip(qv).zip(p) {
                        // d/dq [q log(q/p)] = log(q/p) + 1; q = 0 contributes nothing.
                        if qi > 0.0 {
                            *o += g[0] * ((qi / pi).ln() + 1.0);
                        }
                    }
                }
            }
            Op::StraightThrough(soft) => self.acc_if(grads, *soft, g),
        }
    }

    fn acc_if(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
        if self.tracked(v) {
            accumulate(grads, v, g, g.len());
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64], len: usize) {
    let acc = slot(grads, v, len);
    for (o, x) in acc.iter_mut().zip(g) {
        *o += x;
    }
}

/// Gradients of one backward pass, keyed by leaf name.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    by_name: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.by_name.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.by_name.iter()
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Tensor) {
        self.by_name.insert(name.into(), grad);
    }

    /// Elementwise sum with another gradient set (names must line up when both present).
    pub fn accumulate(&mut self, other: &Gradients) {
        for (name, g) in &other.by_name {
            match self.by_name.get_mut(name) {
                Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
                None => {
                    self.by_name.insert(name.clone(), g.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.by_name.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn into_map(self) -> BTreeMap<String, Tensor> {
        self.by_name
    }
}
