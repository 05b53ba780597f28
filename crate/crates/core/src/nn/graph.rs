//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so walking the tape backwards visits every node after
//! all of its consumers.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::gumbel::GumbelNoise;
use super::tensor::{argmax, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Constant,
    Param,
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    Softmax { x: Var, inv_tau: T },
    OneHotMax,
    WeightedRows { att: Var, objects: Var, group: usize },
    InterleaveRows(Vec<Var>),
    Reshape(Var),
    Column { x: Var, col: usize },
    Mse { pred: Var, target: Var },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss w.r.t. `var`; `None` when `var` does not
    /// influence the loss or does not require gradients.
    pub fn get(&self, var: Var) -> Option<&[T]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, var: Var) -> Option<Vec<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Param, true)
    }

    /// `x·w + b` with `x: [.., I]`, `w: [I, O]`, `b: [O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if wv.shape().len() != 2 || xv.cols() != wv.shape()[0] {
            return Err(Error::dim("linear", xv.shape(), wv.shape()));
        }
        let (rows, inner, out) = (xv.rows(), wv.shape()[0], wv.shape()[1]);
        if bv.len() != out {
            return Err(Error::dim("linear bias", wv.shape(), bv.shape()));
        }
        let mut data = Vec::with_capacity(rows * out);
        for _ in 0..rows {
            data.extend_from_slice(bv.data());
        }
        T::gemm(
            rows,
            inner,
            out,
            T::one(),
            xv.data(),
            inner as isize,
            1,
            wv.data(),
            out as isize,
            1,
            T::one(),
            &mut data,
            out as isize,
            1,
        );
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().expect("linear input has at least one axis") = out;
        let rg = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Tensor::new(shape, data)?, Op::Linear { x, w, b }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v.max(T::zero())).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv
            .data()
            .iter()
            .map(|&v| T::one() / (T::one() + (-v).exp()))
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(x);
        self.push(value, Op::Sigmoid(x), rg)
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, None, T::one(), "softmax")
    }

    /// `softmax((noise + log_probs) / tau)` row-wise over the last axis.
    pub fn gumbel_softmax(&mut self, log_probs: Var, noise: &GumbelNoise<T>, tau: T) -> Result<Var> {
        if tau.is_nan() || tau <= T::zero() {
            return Err(Error::Domain(format!("gumbel_softmax needs tau > 0, got {tau}")));
        }
        let lp = self.value(log_probs);
        if noise.values().len() != lp.len() {
            return Err(Error::dim("gumbel_softmax noise", lp.shape(), noise.shape()));
        }
        self.softmax_impl(log_probs, Some(noise.values()), T::one() / tau, "gumbel_softmax")
    }

    fn softmax_impl(&mut self, x: Var, noise: Option<&[T]>, inv_tau: T, op: &'static str) -> Result<Var> {
        let xv = self.value(x);
        if xv.data().iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric {
                op,
                detail: "NaN input".into(),
            });
        }
        let cols = xv.cols();
        let mut data = xv.data().to_vec();
        if let Some(noise) = noise {
            for (d, n) in data.iter_mut().zip(noise) {
                *d += *n;
            }
        }
        for row in data.chunks_mut(cols) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = ((*v - max) * inv_tau).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.needs(x);
        Ok(self.push(value, Op::Softmax { x, inv_tau }, rg))
    }

    /// One-hot of the row-wise argmax (lowest index on ties). Carries no
    /// gradient; used for deterministic inference.
    pub fn one_hot_max(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let cols = xv.cols();
        let mut data = vec![T::zero(); xv.len()];
        for (r, row) in xv.data().chunks(cols).enumerate() {
            data[r * cols + argmax(row)] = T::one();
        }
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::OneHotMax, false)
    }

    /// Batched attention read-out. `att: [B·group, N]` holds one weighting
    /// per row, `objects: [B, N, F]`; row `r` of the result is
    /// `att[r] · objects[r / group]`, shape `[B·group, F]`.
    pub fn weighted_rows(&mut self, att: Var, objects: Var, group: usize) -> Result<Var> {
        let (av, ov) = (self.value(att), self.value(objects));
        if ov.shape().len() != 3 {
            return Err(Error::dim("weighted_rows objects", ov.shape(), &[0, 0, 0]));
        }
        let (batch, n, f) = (ov.shape()[0], ov.shape()[1], ov.shape()[2]);
        if av.cols() != n || av.rows() != batch * group {
            return Err(Error::dim("weighted_rows", av.shape(), ov.shape()));
        }
        let rows = batch * group;
        let mut data = vec![T::zero(); rows * f];
        for r in 0..rows {
            let b = r / group;
            T::gemm(
                1,
                n,
                f,
                T::one(),
                av.row(r),
                n as isize,
                1,
                &ov.data()[b * n * f..(b + 1) * n * f],
                f as isize,
                1,
                T::zero(),
                &mut data[r * f..(r + 1) * f],
                f as isize,
                1,
            );
        }
        let rg = self.needs(att) || self.needs(objects);
        Ok(self.push(
            Tensor::new(vec![rows, f], data)?,
            Op::WeightedRows {
                att,
                objects,
                group,
            },
            rg,
        ))
    }

    /// Stacks `K` tensors of shape `[B, M]` into `[B·K, M]` with row
    /// `b·K + k` taken from row `b` of input `k`.
    pub fn interleave_rows(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = self
            .value(*inputs.first().ok_or_else(|| Error::Validation("interleave_rows of nothing".into()))?);
        let (rows, cols) = (first.rows(), first.cols());
        for &v in inputs {
            let t = self.value(v);
            if t.rows() != rows || t.cols() != cols {
                return Err(Error::dim("interleave_rows", first.shape(), t.shape()));
            }
        }
        let k = inputs.len();
        let mut data = Vec::with_capacity(rows * k * cols);
        for r in 0..rows {
            for &v in inputs {
                data.extend_from_slice(self.value(v).row(r));
            }
        }
        let rg = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push(
            Tensor::new(vec![rows * k, cols], data)?,
            Op::InterleaveRows(inputs.to_vec()),
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.needs(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Column `col` of every row, shape `[rows, 1]`.
    pub fn column(&mut self, x: Var, col: usize) -> Result<Var> {
        let xv = self.value(x);
        if col >= xv.cols() {
            return Err(Error::dim("column", xv.shape(), &[col]));
        }
        let data = (0..xv.rows()).map(|r| xv.get(r, col)).collect();
        let value = Tensor::new(vec![xv.rows(), 1], data)?;
        let rg = self.needs(x);
        Ok(self.push(value, Op::Column { x, col }, rg))
    }

    /// Mean of squared differences over all elements.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (pv, tv) = (self.value(pred), self.value(target));
        if pv.len() != tv.len() || pv.shape() != tv.shape() {
            return Err(Error::dim("mse_loss", pv.shape(), tv.shape()));
        }
        let value = mse(pv.data(), tv.data());
        let rg = self.needs(pred) || self.needs(target);
        Ok(self.push(Tensor::scalar(value), Op::Mse { pred, target }, rg))
    }

    /// Reverse sweep from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![T::one(); self.nodes[loss.0].value.len()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Vec<T>>], var: Var) -> Option<&'a mut Vec<T>> {
        if !self.needs(var) {
            return None;
        }
        let len = self.nodes[var.0].value.len();
        Some(grads[var.0].get_or_insert_with(|| vec![T::zero(); len]))
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Constant | Op::Param | Op::OneHotMax => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (rows, inner, out) = (xv.rows(), wv.shape()[0], wv.shape()[1]);
                if let Some(dw) = self.slot(grads, *w) {
                    // dW += xᵀ·g
                    T::gemm(
                        inner,
                        rows,
                        out,
                        T::one(),
                        xv.data(),
                        1,
                        inner as isize,
                        g,
                        out as isize,
                        1,
                        T::one(),
                        dw,
                        out as isize,
                        1,
                    );
                }
                if let Some(db) = self.slot(grads, *b) {
                    for row in g.chunks(out) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += *v;
                        }
                    }
                }
                if let Some(dx) = self.slot(grads, *x) {
                    // dx += g·Wᵀ
                    T::gemm(
                        rows,
                        out,
                        inner,
                        T::one(),
                        g,
                        out as isize,
                        1,
                        wv.data(),
                        1,
                        out as isize,
                        T::one(),
                        dx,
                        inner as isize,
                        1,
                    );
                }
            }
            Op::Relu(x) => {
                let y = node.value.data();
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, gv), yv) in dx.iter_mut().zip(g).zip(y) {
                        if *yv > T::zero() {
                            *d += *gv;
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, gv), yv) in dx.iter_mut().zip(g).zip(y) {
                        *d += *gv * *yv * (T::one() - *yv);
                    }
                }
            }
            Op::Softmax { x, inv_tau } => {
                let y = node.value.data();
                let cols = node.value.cols();
                if let Some(dx) = self.slot(grads, *x) {
                    for ((drow, grow), yrow) in dx.chunks_mut(cols).zip(g.chunks(cols)).zip(y.chunks(cols)) {
                        let dot: T = grow.iter().zip(yrow).map(|(a, b)| *a * *b).sum();
                        for ((d, gv), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += *inv_tau * *yv * (*gv - dot);
                        }
                    }
                }
            }
            Op::WeightedRows {
                att,
                objects,
                group,
            } => {
                let (av, ov) = (self.value(*att), self.value(*objects));
                let (n, f) = (ov.shape()[1], ov.shape()[2]);
                let rows = av.rows();
                if let Some(datt) = self.slot(grads, *att) {
                    for r in 0..rows {
                        let b = r / group;
                        // datt[r] += objects[b] · g[r]
                        T::gemm(
                            n,
                            f,
                            1,
                            T::one(),
                            &ov.data()[b * n * f..(b + 1) * n * f],
                            f as isize,
                            1,
                            &g[r * f..(r + 1) * f],
                            1,
                            1,
                            T::one(),
                            &mut datt[r * n..(r + 1) * n],
                            1,
                            1,
                        );
                    }
                }
                if let Some(dobj) = self.slot(grads, *objects) {
                    for r in 0..rows {
                        let b = r / group;
                        // dobjects[b] += att[r]ᵀ ⊗ g[r]
                        T::gemm(
                            n,
                            1,
                            f,
                            T::one(),
                            av.row(r),
                            1,
                            1,
                            &g[r * f..(r + 1) * f],
                            f as isize,
                            1,
                            T::one(),
                            &mut dobj[b * n * f..(b + 1) * n * f],
                            f as isize,
                            1,
                        );
                    }
                }
            }
            Op::InterleaveRows(inputs) => {
                let k = inputs.len();
                let cols = node.value.cols();
                for (slot_k, &v) in inputs.iter().enumerate() {
                    if let Some(dv) = self.slot(grads, v) {
                        for (r, drow) in dv.chunks_mut(cols).enumerate() {
                            let src = &g[(r * k + slot_k) * cols..(r * k + slot_k + 1) * cols];
                            for (d, s) in drow.iter_mut().zip(src) {
                                *d += *s;
                            }
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(dx) = self.slot(grads, *x) {
                    for (d, s) in dx.iter_mut().zip(g) {
                        *d += *s;
                    }
                }
            }
            Op::Column { x, col } => {
                let cols = self.value(*x).cols();
                if let Some(dx) = self.slot(grads, *x) {
                    for (r, gv) in g.iter().enumerate() {
                        dx[r * cols + col] += *gv;
                    }
                }
            }
            Op::Mse { pred, target } => {
                let (pv, tv) = (self.value(*pred), self.value(*target));
                let scale = T::from_f64_lossy(2.0) * g[0] / T::from_usize(pv.len()).expect("length fits");
                if let Some(dp) = self.slot(grads, *pred) {
                    for ((d, p), t) in dp.iter_mut().zip(pv.data()).zip(tv.data()) {
                        *d += scale * (*p - *t);
                    }
                }
                if let Some(dt) = self.slot(grads, *target) {
                    for ((d, p), t) in dt.iter_mut().zip(pv.data()).zip(tv.data()) {
                        *d -= scale * (*p - *t);
                    }
                }
            }
        }
    }
}

/// Mean squared error of two equally long buffers.
pub fn mse<T: Scalar>(pred: &[T], target: &[T]) -> T {
    if pred.is_empty() {
        return T::zero();
    }
    let sum: T = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (*p - *t) * (*p - *t))
        .sum();
    sum / T::from_usize(pred.len()).expect("length fits")
}
