//! Reverse-mode differentiation over a fixed set of dense-array operations.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles in
//! execution order. [`Tape::backward`] walks the record in reverse and
//! accumulates exact gradients into every node that depends on a trainable
//! leaf. Constants (and anything computed only from constants) never receive
//! a gradient.
//!
//! Shape errors inside an operation are programmer errors and panic; the
//! fallible entry points are [`Tape::backward`] and the explicit checks the
//! callers perform on data before recording.

use std::sync::atomic::{AtomicU64, Ordering};

use super::rng::Rng;
use super::tensor::{dot, Real, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node recorded on a particular tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.idx
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(usize),
    Const,
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Gelu(usize),
    Tanh(usize),
    Softmax(usize),
    LogSoftmax(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Gather {
        table: usize,
        ids: Vec<usize>,
    },
    Dropout {
        x: usize,
        mask: Vec<T>,
    },
    Mean(usize),
    Sum(usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows {
        x: usize,
        start: usize,
    },
    SliceCols {
        x: usize,
        start: usize,
    },
    NormalizeRows {
        x: usize,
        norms: Vec<T>,
    },
    Dot(usize, usize),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Layer-normalization variance floor.
pub const LAYER_NORM_EPS: f64 = 1e-5;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_COEF: f64 = 0.044_715;

pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn check(&self, v: Var) -> usize {
        assert!(
            v.tape == self.id && v.idx < self.nodes.len(),
            "variable from another tape"
        );
        v.idx
    }

    fn ng(&self, idxs: &[usize]) -> bool {
        idxs.iter().any(|&i| self.nodes[i].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[self.check(v)].value
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[self.check(v)].needs_grad
    }

    // ---- leaves -------------------------------------------------------------

    /// Trainable leaf whose gradient is retrieved by handle.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Trainable leaf bound to position `index` of a parameter set.
    pub fn param(&mut self, value: Tensor<T>, index: usize) -> Var {
        self.push(value, Op::Param(index), true)
    }

    /// Gradient-inert input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Const, false)
    }

    // ---- linear algebra -----------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.check(a), self.check(b));
        let v = self.nodes[ia].value.matmul(&self.nodes[ib].value);
        let ng = self.ng(&[ia, ib]);
        self.push(v, Op::MatMul(ia, ib), ng)
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.check(a), self.check(b));
        let v = self.nodes[ia].value.matmul_nt(&self.nodes[ib].value);
        let ng = self.ng(&[ia, ib]);
        self.push(v, Op::MatMulNt(ia, ib), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.check(a), self.check(b));
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        assert_eq!(va.shape(), vb.shape(), "add shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let v = Tensor::new(va.shape().to_vec(), data);
        let ng = self.ng(&[ia, ib]);
        self.push(v, Op::Add(ia, ib), ng)
    }

    /// Broadcast-add a length-`m` row to every row of an `[n, m]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ia, ib) = (self.check(a), self.check(row));
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let m = va.cols();
        assert_eq!(vb.len(), m, "add_row width mismatch");
        let mut data = va.data().to_vec();
        for chunk in data.chunks_mut(m) {
            for (x, &b) in chunk.iter_mut().zip(vb.data()) {
                *x += b;
            }
        }
        let v = Tensor::new(va.shape().to_vec(), data);
        let ng = self.ng(&[ia, ib]);
        self.push(v, Op::AddRow(ia, ib), ng)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.check(a), self.check(b));
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        assert_eq!(va.shape(), vb.shape(), "mul shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let v = Tensor::new(va.shape().to_vec(), data);
        let ng = self.ng(&[ia, ib]);
        self.push(v, Op::Mul(ia, ib), ng)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let ia = self.check(a);
        let v = self.nodes[ia].value.map(|x| x * s);
        let ng = self.ng(&[ia]);
        self.push(v, Op::Scale(ia, s), ng)
    }

    /// Dot product of two equal-length arrays, as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.check(a), self.check(b));
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        assert_eq!(va.len(), vb.len(), "dot length mismatch");
        let v = Tensor::scalar(dot(va.data(), vb.data()));
        let ng = self.ng(&[ia, ib]);
        self.push(v, Op::Dot(ia, ib), ng)
    }

    // ---- nonlinearities -----------------------------------------------------

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        let c = T::lit(SQRT_2_OVER_PI);
        let k = T::lit(GELU_COEF);
        let half = T::lit(0.5);
        let v = self.nodes[ia]
            .value
            .map(|x| half * x * (T::one() + (c * (x + k * x * x * x)).tanh()));
        let ng = self.ng(&[ia]);
        self.push(v, Op::Gelu(ia), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        let v = self.nodes[ia].value.map(|x| x.tanh());
        let ng = self.ng(&[ia]);
        self.push(v, Op::Tanh(ia), ng)
    }

    /// Row-wise softmax over the last axis (max-subtracted).
    pub fn softmax(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        let x = &self.nodes[ia].value;
        let m = last_dim(x);
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(m) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let v = Tensor::new(x.shape().to_vec(), data);
        let ng = self.ng(&[ia]);
        self.push(v, Op::Softmax(ia), ng)
    }

    /// Row-wise log-softmax over the last axis (log-sum-exp stabilized).
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        let x = &self.nodes[ia].value;
        let m = last_dim(x);
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(m) {
            let lse = log_sum_exp(row);
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let v = Tensor::new(x.shape().to_vec(), data);
        let ng = self.ng(&[ia]);
        self.push(v, Op::LogSoftmax(ia), ng)
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (ix, ig, ib) = (self.check(x), self.check(gain), self.check(bias));
        let xv = &self.nodes[ix].value;
        let (g, b) = (&self.nodes[ig].value, &self.nodes[ib].value);
        let m = last_dim(xv);
        assert!(g.len() == m && b.len() == m, "layer_norm parameter width");
        let eps = T::lit(LAYER_NORM_EPS);
        let mf = T::lit(m as f64);
        let rows = xv.len() / m;
        let mut xhat = Vec::with_capacity(xv.len());
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.data().chunks(m) {
            let mean = row.iter().copied().sum::<T>() / mf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / mf;
            let r = T::one() / (var + eps).sqrt();
            rstd.push(r);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * r;
                xhat.push(h);
                out.push(h * g.data()[j] + b.data()[j]);
            }
        }
        let v = Tensor::new(xv.shape().to_vec(), out);
        let ng = self.ng(&[ix, ig, ib]);
        self.push(
            v,
            Op::LayerNorm {
                x: ix,
                gain: ig,
                bias: ib,
                xhat,
                rstd,
            },
            ng,
        )
    }

    // ---- indexing and structure ---------------------------------------------

    /// Row gather from a `[V, d]` table: the embedding lookup.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let it = self.check(table);
        let t = &self.nodes[it].value;
        let d = t.cols();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(id < t.rows(), "gather index {id} out of range {}", t.rows());
            data.extend_from_slice(t.row(id));
        }
        let v = Tensor::new(vec![ids.len(), d], data);
        let ng = self.ng(&[it]);
        self.push(
            v,
            Op::Gather {
                table: it,
                ids: ids.to_vec(),
            },
            ng,
        )
    }

    /// Inverted dropout: each element kept with probability `1 - p` and
    /// scaled by `1 / (1 - p)`. With `p == 0` the input is returned unchanged
    /// and no randomness is consumed.
    pub fn dropout(&mut self, a: Var, p: f64, rng: &mut Rng) -> Var {
        assert!((0.0..1.0).contains(&p), "dropout rate {p} outside [0, 1)");
        if p == 0.0 {
            return a;
        }
        let ia = self.check(a);
        let keep = T::lit(1.0 / (1.0 - p));
        let x = &self.nodes[ia].value;
        let mask: Vec<T> = (0..x.len())
            .map(|_| if rng.next_f64() < p { T::zero() } else { keep })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(&v, &k)| v * k).collect();
        let v = Tensor::new(x.shape().to_vec(), data);
        let ng = self.ng(&[ia]);
        self.push(v, Op::Dropout { x: ia, mask }, ng)
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        let x = &self.nodes[ia].value;
        let v = Tensor::scalar(x.data().iter().copied().sum::<T>() / T::lit(x.len() as f64));
        let ng = self.ng(&[ia]);
        self.push(v, Op::Mean(ia), ng)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        let v = Tensor::scalar(self.nodes[ia].value.data().iter().copied().sum::<T>());
        let ng = self.ng(&[ia]);
        self.push(v, Op::Sum(ia), ng)
    }

    /// Stack matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let idxs: Vec<usize> = parts.iter().map(|&p| self.check(p)).collect();
        let cols = self.nodes[idxs[0]].value.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &i in &idxs {
            let v = &self.nodes[i].value;
            assert_eq!(v.cols(), cols, "concat_rows width mismatch");
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let v = Tensor::new(vec![rows, cols], data);
        let ng = self.ng(&idxs);
        self.push(v, Op::ConcatRows(idxs), ng)
    }

    /// Join matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let idxs: Vec<usize> = parts.iter().map(|&p| self.check(p)).collect();
        let rows = self.nodes[idxs[0]].value.rows();
        let total: usize = idxs
            .iter()
            .map(|&i| {
                assert_eq!(self.nodes[i].value.rows(), rows, "concat_cols height mismatch");
                self.nodes[i].value.cols()
            })
            .sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &i in &idxs {
                data.extend_from_slice(self.nodes[i].value.row(r));
            }
        }
        let v = Tensor::new(vec![rows, total], data);
        let ng = self.ng(&idxs);
        self.push(v, Op::ConcatCols(idxs), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let ia = self.check(a);
        let x = &self.nodes[ia].value;
        assert!(start + len <= x.rows(), "slice_rows out of range");
        let c = x.cols();
        let v = Tensor::new(vec![len, c], x.data()[start * c..(start + len) * c].to_vec());
        let ng = self.ng(&[ia]);
        self.push(v, Op::SliceRows { x: ia, start }, ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let ia = self.check(a);
        let x = &self.nodes[ia].value;
        assert!(start + len <= x.cols(), "slice_cols out of range");
        let mut data = Vec::with_capacity(x.rows() * len);
        for r in 0..x.rows() {
            data.extend_from_slice(&x.row(r)[start..start + len]);
        }
        let v = Tensor::new(vec![x.rows(), len], data);
        let ng = self.ng(&[ia]);
        self.push(v, Op::SliceCols { x: ia, start }, ng)
    }

    /// Divide every row by its L2 norm. Rows must have nonzero norm.
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        let x = &self.nodes[ia].value;
        let m = last_dim(x);
        let mut norms = Vec::with_capacity(x.len() / m);
        let mut data = Vec::with_capacity(x.len());
        for row in x.data().chunks(m) {
            let n = dot(row, row).sqrt();
            assert!(n > T::zero(), "normalize_rows on a zero row");
            norms.push(n);
            data.extend(row.iter().map(|&v| v / n));
        }
        let v = Tensor::new(x.shape().to_vec(), data);
        let ng = self.ng(&[ia]);
        self.push(v, Op::NormalizeRows { x: ia, norms }, ng)
    }

    // ---- reverse pass -------------------------------------------------------

    /// Exact gradients of the scalar `loss` with respect to every recorded
    /// node that depends on a trainable leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if loss.tape != self.id || loss.idx >= self.nodes.len() {
            return Err(Error::UnrecordedNode(loss.idx));
        }
        let root = &self.nodes[loss.idx].value;
        if root.len() != 1 {
            return Err(Error::NonScalarLoss(root.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(loss.idx + 1, || None);
        if self.nodes[loss.idx].needs_grad {
            grads[loss.idx] = Some(Tensor::full(root.shape(), T::one()));
        }
        for i in (0..=loss.idx).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
            params: self
                .nodes
                .iter()
                .enumerate()
                .filter_map(|(i, n)| match n.op {
                    Op::Param(p) => Some((p, i)),
                    _ => None,
                })
                .collect(),
        })
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let val = |j: usize| &self.nodes[j].value;
        let wants = |j: usize| self.nodes[j].needs_grad;
        let mut acc = |j: usize, t: Tensor<T>| accumulate(grads, j, t);
        match &node.op {
            Op::Leaf | Op::Param(_) | Op::Const => {}
            &Op::MatMul(a, b) => {
                if wants(a) {
                    acc(a, g.matmul_nt(val(b)));
                }
                if wants(b) {
                    acc(b, val(a).matmul_tn(g));
                }
            }
            &Op::MatMulNt(a, b) => {
                if wants(a) {
                    acc(a, g.matmul(val(b)));
                }
                if wants(b) {
                    acc(b, g.matmul_tn(val(a)));
                }
            }
            &Op::Add(a, b) => {
                if wants(a) {
                    acc(a, g.clone());
                }
                if wants(b) {
                    acc(b, g.clone());
                }
            }
            &Op::AddRow(a, b) => {
                if wants(a) {
                    acc(a, g.clone());
                }
                if wants(b) {
                    let m = g.cols();
                    let mut col = vec![T::zero(); m];
                    for row in g.data().chunks(m) {
                        for (c, &v) in col.iter_mut().zip(row) {
                            *c += v;
                        }
                    }
                    acc(b, Tensor::new(val(b).shape().to_vec(), col));
                }
            }
            &Op::Mul(a, b) => {
                if wants(a) {
                    acc(a, zip_map(g, val(b), |x, y| x * y));
                }
                if wants(b) {
                    acc(b, zip_map(g, val(a), |x, y| x * y));
                }
            }
            &Op::Scale(a, s) => acc(a, g.map(|x| x * s)),
            &Op::Gelu(a) => {
                let c = T::lit(SQRT_2_OVER_PI);
                let k = T::lit(GELU_COEF);
                let half = T::lit(0.5);
                let three = T::lit(3.0);
                let d = val(a).map(|x| {
                    let th = (c * (x + k * x * x * x)).tanh();
                    half * (T::one() + th)
                        + half * x * (T::one() - th * th) * c * (T::one() + three * k * x * x)
                });
                acc(a, zip_map(g, &d, |x, y| x * y));
            }
            &Op::Tanh(a) => {
                acc(a, zip_map(g, &node.value, |x, y| x * (T::one() - y * y)));
            }
            &Op::Softmax(a) => {
                let m = last_dim(g);
                let mut out = Vec::with_capacity(g.len());
                for (gr, yr) in g.data().chunks(m).zip(node.value.data().chunks(m)) {
                    let s = dot(gr, yr);
                    out.extend(gr.iter().zip(yr).map(|(&gv, &yv)| yv * (gv - s)));
                }
                acc(a, Tensor::new(g.shape().to_vec(), out));
            }
            &Op::LogSoftmax(a) => {
                let m = last_dim(g);
                let mut out = Vec::with_capacity(g.len());
                for (gr, yr) in g.data().chunks(m).zip(node.value.data().chunks(m)) {
                    let s = gr.iter().copied().sum::<T>();
                    out.extend(gr.iter().zip(yr).map(|(&gv, &yv)| gv - yv.exp() * s));
                }
                acc(a, Tensor::new(g.shape().to_vec(), out));
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let m = last_dim(g);
                let gv = val(*gain).data();
                if wants(*gain) || wants(*bias) {
                    let mut dg = vec![T::zero(); m];
                    let mut db = vec![T::zero(); m];
                    for (gr, hr) in g.data().chunks(m).zip(xhat.chunks(m)) {
                        for j in 0..m {
                            dg[j] += gr[j] * hr[j];
                            db[j] += gr[j];
                        }
                    }
                    if wants(*gain) {
                        acc(*gain, Tensor::new(val(*gain).shape().to_vec(), dg));
                    }
                    if wants(*bias) {
                        acc(*bias, Tensor::new(val(*bias).shape().to_vec(), db));
                    }
                }
                if wants(*x) {
                    let mf = T::lit(m as f64);
                    let mut out = Vec::with_capacity(g.len());
                    for ((gr, hr), &r) in g.data().chunks(m).zip(xhat.chunks(m)).zip(rstd) {
                        let dh: Vec<T> = gr.iter().zip(gv).map(|(&a, &b)| a * b).collect();
                        let mean_dh = dh.iter().copied().sum::<T>() / mf;
                        let mean_dh_h = dot(&dh, hr) / mf;
                        out.extend(
                            dh.iter()
                                .zip(hr)
                                .map(|(&d, &h)| r * (d - mean_dh - h * mean_dh_h)),
                        );
                    }
                    acc(*x, Tensor::new(g.shape().to_vec(), out));
                }
            }
            Op::Gather { table, ids } => {
                let t = val(*table);
                let d = t.cols();
                let mut out = Tensor::zeros(t.shape());
                let od = out.data_mut();
                for (r, &id) in ids.iter().enumerate() {
                    for (o, &v) in od[id * d..(id + 1) * d].iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(*table, out);
            }
            Op::Dropout { x, mask } => {
                let data = g.data().iter().zip(mask).map(|(&a, &k)| a * k).collect();
                acc(*x, Tensor::new(g.shape().to_vec(), data));
            }
            &Op::Mean(a) => {
                let n = T::lit(val(a).len() as f64);
                acc(a, Tensor::full(val(a).shape(), g.item() / n));
            }
            &Op::Sum(a) => acc(a, Tensor::full(val(a).shape(), g.item())),
            Op::ConcatRows(parts) => {
                let c = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let r = val(p).rows();
                    if wants(p) {
                        let data = g.data()[offset * c..(offset + r) * c].to_vec();
                        acc(p, Tensor::new(vec![r, c], data));
                    }
                    offset += r;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = val(p).cols();
                    if wants(p) {
                        let mut data = Vec::with_capacity(g.rows() * c);
                        for r in 0..g.rows() {
                            data.extend_from_slice(&g.row(r)[offset..offset + c]);
                        }
                        acc(p, Tensor::new(vec![g.rows(), c], data));
                    }
                    offset += c;
                }
            }
            &Op::SliceRows { x, start } => {
                let mut out = Tensor::zeros(val(x).shape());
                let c = g.cols();
                out.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                acc(x, out);
            }
            &Op::SliceCols { x, start } => {
                let src = val(x);
                let (rows, cols, w) = (src.rows(), src.cols(), g.cols());
                let mut out = Tensor::zeros(src.shape());
                let od = out.data_mut();
                for r in 0..rows {
                    od[r * cols + start..r * cols + start + w].copy_from_slice(g.row(r));
                }
                acc(x, out);
            }
            Op::NormalizeRows { x, norms } => {
                let m = last_dim(g);
                let mut out = Vec::with_capacity(g.len());
                for ((gr, yr), &n) in g.data().chunks(m).zip(node.value.data().chunks(m)).zip(norms) {
                    let s = dot(gr, yr);
                    out.extend(gr.iter().zip(yr).map(|(&gv, &yv)| (gv - yv * s) / n));
                }
                acc(*x, Tensor::new(g.shape().to_vec(), out));
            }
            &Op::Dot(a, b) => {
                let s = g.item();
                if wants(a) {
                    acc(a, val(b).map(|v| v * s));
                }
                if wants(b) {
                    acc(b, val(a).map(|v| v * s));
                }
            }
        }
    }
}

fn last_dim<T: Real>(t: &Tensor<T>) -> usize {
    *t.shape().last().unwrap_or(&1)
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data)
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], j: usize, t: Tensor<T>) {
    match &mut grads[j] {
        Some(existing) => existing.add_scaled(&t, T::one()),
        slot @ None => *slot = Some(t),
    }
}

/// Numerically stable `log(sum(exp(row)))`.
pub fn log_sum_exp<T: Real>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

/// Result of [`Tape::backward`].
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(usize, usize)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `v`; `None` if `v` does not
    /// influence the loss through a trainable path.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.idx).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros shaped like `like` if there is none.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor<T>) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    /// Collect per-parameter gradients, shape-matched to `params`. A parameter
    /// bound more than once has its contributions summed; one that never
    /// reached the loss gets zeros.
    pub fn param_grads(&self, params: &[Tensor<T>]) -> Vec<Tensor<T>> {
        let mut out: Vec<Tensor<T>> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        for &(p, node) in &self.params {
            if let Some(Some(g)) = self.grads.get(node) {
                out[p].add_scaled(g, T::one());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gradient_is_one() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let g = tape.backward(x).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 1.0);
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let mut tape = Tape::<f64>::new();
        let w = tape.param(Tensor::new(vec![2], vec![1.0, 2.0]), 0);
        let c = tape.constant(Tensor::scalar(5.0));
        let g = tape.backward(c).unwrap();
        assert!(g.get(w).is_none());
        let pg = g.param_grads(&[tape.value(w).clone()]);
        assert_eq!(pg[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn foreign_var_rejected() {
        let mut a = Tape::<f64>::new();
        let b = Tape::<f64>::new();
        let x = a.leaf(Tensor::scalar(1.0));
        assert!(matches!(b.backward(x), Err(Error::UnrecordedNode(_))));
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut tape = Tape::<f32>::new();
        let mut rng = Rng::new(1);
        let x = tape.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]));
        let before = rng.clone();
        let y = tape.dropout(x, 0.0, &mut rng);
        assert_eq!(x, y);
        assert_eq!(rng, before);
    }

    #[test]
    fn dropout_is_inverted() {
        let mut tape = Tape::<f64>::new();
        let mut rng = Rng::new(9);
        let x = tape.leaf(Tensor::full(&[10_000], 1.0));
        let y = tape.dropout(x, 0.25, &mut rng);
        let vals = tape.value(y).data();
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-12));
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn softmax_extreme_inputs_stay_finite() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::new(vec![1, 3], vec![1e4, -1e4, 0.0]));
        let y = tape.softmax(x);
        let ls = tape.log_softmax(x);
        assert!(tape.value(y).all_finite());
        assert!(tape.value(ls).all_finite());
        assert_eq!(tape.value(y).data()[0], 1.0);
    }

    #[test]
    fn layer_norm_constant_row_is_finite() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::full(&[2, 4], 7.0));
        let g = tape.constant(Tensor::full(&[4], 1.0));
        let b = tape.constant(Tensor::zeros(&[4]));
        let y = tape.layer_norm(x, g, b);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
        let s = tape.sum(y);
        let grads = tape.backward(s).unwrap();
        assert!(grads.get(x).unwrap().all_finite());
    }

    #[test]
    fn shared_param_gradients_accumulate() {
        // loss = w.w + w.w for the same parameter bound twice.
        let w = Tensor::new(vec![2], vec![1.0f64, -2.0]);
        let mut tape = Tape::new();
        let a = tape.param(w.clone(), 0);
        let b = tape.param(w.clone(), 0);
        let da = tape.dot(a, a);
        let db = tape.dot(b, b);
        let s = tape.add(da, db);
        let grads = tape.backward(s).unwrap();
        let pg = grads.param_grads(&[w]);
        assert_eq!(pg[0].data(), &[4.0, -8.0]);
    }
}
