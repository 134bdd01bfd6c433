use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// GeLU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Sigmoid(usize),
    Tanh(usize),
    Gelu(usize),
    Ln(usize),
    Square(usize),
    Clamp(usize, f64, f64),
    Softmax(usize),
    Dropout(usize, Arc<Vec<f64>>),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    Transpose(usize),
    Sum(usize),
    Mean(usize),
    SliceCols(usize, usize),
    SelectRow(usize, usize),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Records a computation for one reverse-mode pass.
///
/// A tape is single-owner and short-lived: build it for one training step or
/// one forward evaluation, read the values, take gradients, drop it.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    loaded: RefCell<HashMap<ParamId, usize>>,
    training: bool,
}

impl Tape {
    /// Tape in training mode (dropout active).
    pub fn new() -> Self {
        Self::with_mode(true)
    }

    /// Tape in evaluation mode (dropout is the identity).
    pub fn eval() -> Self {
        Self::with_mode(false)
    }

    pub fn with_mode(training: bool) -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            loaded: RefCell::new(HashMap::new()),
            training,
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        self.push_shared(Arc::new(value), op, needs_grad)
    }

    fn push_shared(&self, value: Arc<Tensor>, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    /// Untracked input. Must be rank 2.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        debug_assert!(value.is_matrix());
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    /// Tracked parameter. Loading the same parameter twice returns the same node.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        if let Some(&node) = self.loaded.borrow().get(&id) {
            return Var {
                tape: self,
                id: node,
            };
        }
        let var = self.push_shared(store.shared_value(id), Op::Param(id), !store.is_frozen(id));
        self.loaded.borrow_mut().insert(id, var.id);
        var
    }

    /// Loads a parameter by name.
    pub fn param_named(&self, store: &ParamStore, name: &str) -> Result<Var<'_>> {
        Ok(self.param(store, store.require(name)?))
    }

    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let rows = values
            .first()
            .map(|v| v.rows())
            .ok_or_else(|| Error::Argument("concat of zero tensors".into()))?;
        if let Some(bad) = values.iter().find(|v| v.rows() != rows) {
            return Err(Error::shape("concat_cols", values[0].shape(), bad.shape()));
        }
        let cols: usize = values.iter().map(|v| v.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for v in &values {
                data.extend_from_slice(v.row_slice(r));
            }
        }
        let needs = parts.iter().any(|p| self.needs(p.id));
        Ok(self.push(
            Tensor::new(vec![rows, cols], data)?,
            Op::ConcatCols(parts.iter().map(|p| p.id).collect()),
            needs,
        ))
    }

    pub fn concat_rows<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let cols = values
            .first()
            .map(|v| v.cols())
            .ok_or_else(|| Error::Argument("concat of zero tensors".into()))?;
        if let Some(bad) = values.iter().find(|v| v.cols() != cols) {
            return Err(Error::shape("concat_rows", values[0].shape(), bad.shape()));
        }
        let rows: usize = values.iter().map(|v| v.rows()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for v in &values {
            data.extend_from_slice(v.data());
        }
        let needs = parts.iter().any(|p| self.needs(p.id));
        Ok(self.push(
            Tensor::new(vec![rows, cols], data)?,
            Op::ConcatRows(parts.iter().map(|p| p.id).collect()),
            needs,
        ))
    }

    /// Gradients of a scalar `loss` with respect to every tracked parameter.
    pub fn gradients(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let loss_value = &nodes[loss.id].value;
        if loss_value.numel() != 1 {
            return Err(Error::Argument(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        if !loss_value.item().is_finite() {
            return Err(Error::Argument("backward on a non-finite loss".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for i in (0..=loss.id).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            let v = &node.value;
            let mut acc = |id: usize, f: &mut dyn FnMut(&mut [f64])| {
                if nodes[id].needs_grad {
                    let slot =
                        grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.numel()]);
                    f(slot);
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(pid) => {
                    if out.entries.len() <= pid.0 {
                        out.entries.resize(pid.0 + 1, None);
                    }
                    let t = Tensor::new(v.shape().to_vec(), g)?;
                    match &mut out.entries[pid.0] {
                        Some(existing) => existing.add_assign(&t)?,
                        slot => *slot = Some(t),
                    }
                }
                &Op::MatMul(a, b) => {
                    let av = &nodes[a].value;
                    let bv = &nodes[b].value;
                    let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                    acc(a, &mut |ga| {
                        // dA = dC B^T
                        for r in 0..n {
                            for p in 0..k {
                                let mut s = 0.0;
                                for c in 0..m {
                                    s += g[r * m + c] * bv.data()[p * m + c];
                                }
                                ga[r * k + p] += s;
                            }
                        }
                    });
                    acc(b, &mut |gb| {
                        // dB = A^T dC
                        for r in 0..n {
                            for p in 0..k {
                                let a_rp = av.data()[r * k + p];
                                if a_rp == 0.0 {
                                    continue;
                                }
                                for c in 0..m {
                                    gb[p * m + c] += a_rp * g[r * m + c];
                                }
                            }
                        }
                    });
                }
                &Op::Add(a, b) => {
                    acc(a, &mut |ga| add_into(ga, &g));
                    acc(b, &mut |gb| add_into(gb, &g));
                }
                &Op::AddRow(a, row) => {
                    acc(a, &mut |ga| add_into(ga, &g));
                    let cols = v.cols();
                    acc(row, &mut |gr| {
                        for chunk in g.chunks(cols) {
                            add_into(gr, chunk);
                        }
                    });
                }
                &Op::Sub(a, b) => {
                    acc(a, &mut |ga| add_into(ga, &g));
                    acc(b, &mut |gb| {
                        for (x, y) in gb.iter_mut().zip(&g) {
                            *x -= y;
                        }
                    });
                }
                &Op::Mul(a, b) => {
                    let av = &nodes[a].value;
                    let bv = &nodes[b].value;
                    acc(a, &mut |ga| {
                        for ((x, gi), bi) in ga.iter_mut().zip(&g).zip(bv.data()) {
                            *x += gi * bi;
                        }
                    });
                    acc(b, &mut |gb| {
                        for ((x, gi), ai) in gb.iter_mut().zip(&g).zip(av.data()) {
                            *x += gi * ai;
                        }
                    });
                }
                &Op::Scale(a, c) => acc(a, &mut |ga| {
                    for (x, gi) in ga.iter_mut().zip(&g) {
                        *x += c * gi;
                    }
                }),
                &Op::AddScalar(a) => acc(a, &mut |ga| add_into(ga, &g)),
                &Op::Sigmoid(a) => acc(a, &mut |ga| {
                    for ((x, gi), y) in ga.iter_mut().zip(&g).zip(v.data()) {
                        *x += gi * y * (1.0 - y);
                    }
                }),
                &Op::Tanh(a) => acc(a, &mut |ga| {
                    for ((x, gi), y) in ga.iter_mut().zip(&g).zip(v.data()) {
                        *x += gi * (1.0 - y * y);
                    }
                }),
                &Op::Gelu(a) => {
                    let av = &nodes[a].value;
                    acc(a, &mut |ga| {
                        for ((x, gi), xi) in ga.iter_mut().zip(&g).zip(av.data()) {
                            *x += gi * gelu_grad(*xi);
                        }
                    })
                }
                &Op::Ln(a) => {
                    let av = &nodes[a].value;
                    acc(a, &mut |ga| {
                        for ((x, gi), xi) in ga.iter_mut().zip(&g).zip(av.data()) {
                            *x += gi / xi;
                        }
                    })
                }
                &Op::Square(a) => {
                    let av = &nodes[a].value;
                    acc(a, &mut |ga| {
                        for ((x, gi), xi) in ga.iter_mut().zip(&g).zip(av.data()) {
                            *x += 2.0 * gi * xi;
                        }
                    })
                }
                &Op::Clamp(a, lo, hi) => {
                    let av = &nodes[a].value;
                    acc(a, &mut |ga| {
                        for ((x, gi), xi) in ga.iter_mut().zip(&g).zip(av.data()) {
                            if *xi >= lo && *xi <= hi {
                                *x += gi;
                            }
                        }
                    })
                }
                &Op::Softmax(a) => {
                    let cols = v.cols();
                    acc(a, &mut |ga| {
                        for ((gar, gr), yr) in ga
                            .chunks_mut(cols)
                            .zip(g.chunks(cols))
                            .zip(v.data().chunks(cols))
                        {
                            let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                            for ((x, gi), yi) in gar.iter_mut().zip(gr).zip(yr) {
                                *x += yi * (gi - dot);
                            }
                        }
                    })
                }
                Op::Dropout(a, mask) => acc(*a, &mut |ga| {
                    for ((x, gi), m) in ga.iter_mut().zip(&g).zip(mask.iter()) {
                        *x += gi * m;
                    }
                }),
                Op::ConcatCols(parts) => {
                    let rows = v.rows();
                    let total = v.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let pc = nodes[p].value.cols();
                        acc(p, &mut |gp| {
                            for r in 0..rows {
                                add_into(
                                    &mut gp[r * pc..(r + 1) * pc],
                                    &g[r * total + offset..r * total + offset + pc],
                                );
                            }
                        });
                        offset += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = nodes[p].value.numel();
                        acc(p, &mut |gp| add_into(gp, &g[offset..offset + n]));
                        offset += n;
                    }
                }
                &Op::Transpose(a) => {
                    let (r, c) = (v.rows(), v.cols());
                    acc(a, &mut |ga| {
                        // output is r x c, input is c x r
                        for i in 0..r {
                            for j in 0..c {
                                ga[j * r + i] += g[i * c + j];
                            }
                        }
                    })
                }
                &Op::Sum(a) => acc(a, &mut |ga| {
                    for x in ga.iter_mut() {
                        *x += g[0];
                    }
                }),
                &Op::Mean(a) => {
                    let n = nodes[a].value.numel() as f64;
                    acc(a, &mut |ga| {
                        for x in ga.iter_mut() {
                            *x += g[0] / n;
                        }
                    })
                }
                &Op::SliceCols(a, start) => {
                    let in_cols = nodes[a].value.cols();
                    let (rows, cols) = (v.rows(), v.cols());
                    acc(a, &mut |ga| {
                        for r in 0..rows {
                            add_into(
                                &mut ga[r * in_cols + start..r * in_cols + start + cols],
                                &g[r * cols..(r + 1) * cols],
                            );
                        }
                    })
                }
                &Op::SelectRow(a, row) => {
                    let cols = v.cols();
                    acc(a, &mut |ga| {
                        add_into(&mut ga[row * cols..(row + 1) * cols], &g);
                    })
                }
            }
        }
        Ok(out)
    }

    /// Reverse pass that adds the gradients into `store`. Repeated calls
    /// accumulate until [`ParamStore::zero_grad`].
    pub fn backward(&self, loss: Var<'_>, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        store.accumulate(&grads)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("value", &self.value())
            .finish()
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Arc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Value of a `[1, 1]` node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn needs(&self) -> bool {
        self.tape.needs(self.id)
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let out = self.value().map(f);
        let needs = self.needs();
        self.tape.push(out, op, needs)
    }

    fn elementwise(
        self,
        other: Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(Error::shape(name, a.shape(), b.shape()));
        }
        let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
        let needs = self.needs() || other.needs();
        Ok(self
            .tape
            .push(Tensor::new(a.shape().to_vec(), data)?, op, needs))
    }

    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let out = self.value().matmul(&rhs.value())?;
        let needs = self.needs() || rhs.needs();
        Ok(self.tape.push(out, Op::MatMul(self.id, rhs.id), needs))
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(rhs, "add", Op::Add(self.id, rhs.id), |a, b| a + b)
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(rhs, "sub", Op::Sub(self.id, rhs.id), |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(rhs, "mul", Op::Mul(self.id, rhs.id), |a, b| a * b)
    }

    /// Adds a `[1, c]` row to every row of a `[r, c]` matrix.
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), row.value());
        if b.rows() != 1 || a.cols() != b.cols() {
            return Err(Error::shape("add_row", a.shape(), b.shape()));
        }
        let cols = a.cols();
        let data = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + b.data()[i % cols])
            .collect();
        let needs = self.needs() || row.needs();
        Ok(self.tape.push(
            Tensor::new(a.shape().to_vec(), data)?,
            Op::AddRow(self.id, row.id),
            needs,
        ))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c), |x| c * x)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(Op::AddScalar(self.id), |x| x + c)
    }

    /// `1 - x`.
    pub fn one_minus(self) -> Var<'t> {
        self.scale(-1.0).add_scalar(1.0)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn gelu(self) -> Var<'t> {
        self.unary(Op::Gelu(self.id), gelu)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(Op::Ln(self.id), f64::ln)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(Op::Square(self.id), |x| x * x)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamped.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(Op::Clamp(self.id, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(self) -> Var<'t> {
        let a = self.value();
        let cols = a.cols();
        let mut data = a.data().to_vec();
        for row in data.chunks_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        let needs = self.needs();
        self.tape.push(
            Tensor::new(a.shape().to_vec(), data).expect("same shape"),
            Op::Softmax(self.id),
            needs,
        )
    }

    /// Inverted dropout; identity on an evaluation tape or with `rate == 0`.
    pub fn dropout(self, rate: f64, rng: &mut impl Rng) -> Result<Var<'t>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Argument(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !self.tape.training || rate == 0.0 {
            return Ok(self);
        }
        let a = self.value();
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..a.numel())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = a.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let needs = self.needs();
        Ok(self.tape.push(
            Tensor::new(a.shape().to_vec(), data)?,
            Op::Dropout(self.id, Arc::new(mask)),
            needs,
        ))
    }

    pub fn transpose(self) -> Var<'t> {
        let out = self.value().transpose();
        let needs = self.needs();
        self.tape.push(out, Op::Transpose(self.id), needs)
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.value().sum();
        let needs = self.needs();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id), needs)
    }

    pub fn mean(self) -> Var<'t> {
        let a = self.value();
        let m = a.sum() / a.numel() as f64;
        let needs = self.needs();
        self.tape.push(Tensor::scalar(m), Op::Mean(self.id), needs)
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'t>> {
        let a = self.value();
        if start + len > a.cols() {
            return Err(Error::shape("slice_cols", a.shape(), &[start, len]));
        }
        let mut data = Vec::with_capacity(a.rows() * len);
        for r in 0..a.rows() {
            data.extend_from_slice(&a.row_slice(r)[start..start + len]);
        }
        let needs = self.needs();
        Ok(self.tape.push(
            Tensor::new(vec![a.rows(), len], data)?,
            Op::SliceCols(self.id, start),
            needs,
        ))
    }

    pub fn select_row(self, row: usize) -> Result<Var<'t>> {
        let a = self.value();
        if row >= a.rows() {
            return Err(Error::shape("select_row", a.shape(), &[row]));
        }
        let needs = self.needs();
        Ok(self.tape.push(
            Tensor::row(a.row_slice(row).to_vec()),
            Op::SelectRow(self.id, row),
            needs,
        ))
    }
}
