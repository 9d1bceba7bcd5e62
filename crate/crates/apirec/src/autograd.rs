//! Reverse-mode automatic differentiation over 2-D tensors.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding its
//! output value; [`Tape::backward`] walks the nodes in reverse and accumulates
//! gradients. All tensors are `Array2`; row vectors are `[1, n]` matrices.
//!
//! The tape is generic over the element type so the same graph code runs in
//! f32 for training and inference and in f64 for finite-difference checks.

use ndarray::{s, Array1, Array2, Axis};

/// Element type of a tape: f32 in production, f64 in numerical checks.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::ops::AddAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Shorthand for lossy conversion of literals.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T: Scalar> {
    Leaf,
    /// Row gather from an embedding table.
    Gather { table: Var, ids: Vec<usize> },
    Add(Var, Var),
    /// `x [m,n] + bias [1,n]`, broadcast over rows.
    AddBias(Var, Var),
    /// `x + constant` (no gradient into the constant).
    AddConst(Var),
    /// `x * constant`, elementwise.
    MulConst(Var, Array2<T>),
    Scale(Var, T),
    /// `a [m,k] . b [k,n]`.
    MatMul(Var, Var),
    /// `a [m,k] . b[n,k]^T`.
    MatMulTransposeB(Var, Var),
    ConcatCols(Var, Var),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    /// Mean over the rows flagged `true`, yielding `[1, n]`.
    MeanRows { x: Var, keep: Vec<bool> },
    /// Row-wise layer normalization with learned gain/bias `[1, n]`.
    LayerNorm { x: Var, gain: Var, bias: Var, eps: T },
    SoftmaxRows(Var),
    Gelu(Var),
    Tanh(Var),
    Sigmoid(Var),
    /// Mean binary cross entropy against a constant target, yielding `[1,1]`.
    BceMean { pred: Var, target: Array2<T>, eps: T },
}

struct Node<T: Scalar> {
    value: Array2<T>,
    op: Op<T>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Array2<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the root with respect to `v`; `None` when `v` does not
    /// influence the root.
    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

/// Recorded forward computation.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn gelu_scalar<T: Scalar>(x: T) -> T {
    // tanh approximation of the Gaussian error linear unit
    let c = T::c(0.797_884_560_802_865_4);
    let a = T::c(0.044715);
    let half = T::c(0.5);
    let inner = c * (x + a * x * x * x);
    half * x * (T::one() + inner.tanh())
}

fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let c = T::c(0.797_884_560_802_865_4);
    let a = T::c(0.044715);
    let half = T::c(0.5);
    let three = T::c(3.0);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x)
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut out = Array2::zeros((ids.len(), t.ncols()));
        for (row, &id) in ids.iter().enumerate() {
            out.row_mut(row).assign(&t.row(id));
        }
        self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        debug_assert_eq!(self.value(bias).nrows(), 1);
        let value = self.value(x) + &self.value(bias).row(0);
        self.push(value, Op::AddBias(x, bias))
    }

    pub fn add_const(&mut self, x: Var, constant: &Array2<T>) -> Var {
        let value = self.value(x) + constant;
        self.push(value, Op::AddConst(x))
    }

    pub fn mul_const(&mut self, x: Var, constant: Array2<T>) -> Var {
        let value = self.value(x) * &constant;
        self.push(value, Op::MulConst(x, constant))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let value = self.value(x).mapv(|v| v * factor);
        self.push(value, Op::Scale(x, factor))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn matmul_tb(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        self.push(value, Op::MatMulTransposeB(a, b))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        debug_assert_eq!(va.nrows(), vb.nrows());
        let mut out = Array2::zeros((va.nrows(), va.ncols() + vb.ncols()));
        out.slice_mut(s![.., ..va.ncols()]).assign(va);
        out.slice_mut(s![.., va.ncols()..]).assign(vb);
        self.push(out, Op::ConcatCols(a, b))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(value, Op::SliceCols { x, start })
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).slice(s![start..start + len, ..]).to_owned();
        self.push(value, Op::SliceRows { x, start })
    }

    /// Mean of the rows with `keep[row] == true`; at least one row must be kept.
    pub fn mean_rows(&mut self, x: Var, keep: &[bool]) -> Var {
        let v = self.value(x);
        debug_assert_eq!(v.nrows(), keep.len());
        let count = keep.iter().filter(|&&k| k).count();
        assert!(count > 0, "mean_rows over zero rows");
        let mut sum = Array1::<T>::zeros(v.ncols());
        for (row, &k) in keep.iter().enumerate() {
            if k {
                sum = sum + v.row(row);
            }
        }
        let mean = sum.mapv(|s| s / T::c(count as f64));
        self.push(
            mean.insert_axis(Axis(0)),
            Op::MeanRows {
                x,
                keep: keep.to_vec(),
            },
        )
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Var {
        let v = self.value(x);
        let g = self.value(gain).row(0).to_owned();
        let b = self.value(bias).row(0).to_owned();
        let n = T::c(v.ncols() as f64);
        let mut out = Array2::zeros(v.raw_dim());
        for (row, mut out_row) in v.outer_iter().zip(out.outer_iter_mut()) {
            let mean = row.sum() / n;
            let var = row.fold(T::zero(), |acc, &x| acc + (x - mean) * (x - mean)) / n;
            let inv = (var + eps).sqrt().recip();
            for (j, o) in out_row.iter_mut().enumerate() {
                *o = (row[j] - mean) * inv * g[j] + b[j];
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, eps })
    }

    /// Row-wise softmax. `-inf` entries receive exactly zero probability.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let mut out = Array2::zeros(v.raw_dim());
        for (row, mut out_row) in v.outer_iter().zip(out.outer_iter_mut()) {
            let max = row.fold(T::neg_infinity(), |acc, &x| acc.max(x));
            let mut denom = T::zero();
            for (j, o) in out_row.iter_mut().enumerate() {
                let e = (row[j] - max).exp();
                *o = e;
                denom = denom + e;
            }
            out_row.mapv_inplace(|e| e / denom);
        }
        self.push(out, Op::SoftmaxRows(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(gelu_scalar);
        self.push(value, Op::Gelu(x))
    }

    /// Hyperbolic tangent, clamped to the open interval (-1, 1) so saturated
    /// outputs never round to the endpoints.
    pub fn tanh(&mut self, x: Var) -> Var {
        let lim = T::one() - T::epsilon() / T::c(2.0);
        let value = self.value(x).mapv(|v| v.tanh().min(lim).max(-lim));
        self.push(value, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| T::one() / (T::one() + (-v).exp()));
        self.push(value, Op::Sigmoid(x))
    }

    /// Mean over all elements of `-[t ln p + (1-t) ln(1-p)]` with predictions
    /// clamped to `[eps, 1-eps]`.
    pub fn bce_mean(&mut self, pred: Var, target: Array2<T>, eps: T) -> Var {
        let p = self.value(pred);
        debug_assert_eq!(p.raw_dim(), target.raw_dim());
        let n = T::c(p.len() as f64);
        let mut total = T::zero();
        for (&pi, &ti) in p.iter().zip(target.iter()) {
            // NaN predictions must propagate into the loss, so clamp via
            // comparisons instead of min/max (which drop NaN operands).
            let clamped = if pi < eps {
                eps
            } else if pi > T::one() - eps {
                T::one() - eps
            } else {
                pi
            };
            total = total - (ti * clamped.ln() + (T::one() - ti) * (T::one() - clamped).ln());
        }
        let value = Array2::from_elem((1, 1), total / n);
        self.push(value, Op::BceMean { pred, target, eps })
    }

    /// Accumulates gradients of `root` (which must be `[1,1]`) with respect to
    /// every node that influences it.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert_eq!(
            self.nodes[root.0].value.raw_dim(),
            ndarray::Dim([1, 1]),
            "backward root must be a scalar node"
        );
        let mut grads: Vec<Option<Array2<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[root.0] = Some(Array2::ones((1, 1)));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn backprop_node(&self, i: usize, g: &Array2<T>, grads: &mut [Option<Array2<T>>]) {
        fn acc<T: Scalar>(grads: &mut [Option<Array2<T>>], v: Var, delta: Array2<T>) {
            match &mut grads[v.0] {
                Some(existing) => *existing = &*existing + &delta,
                slot => *slot = Some(delta),
            }
        }

        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Gather { table, ids } => {
                let shape = self.value(*table).raw_dim();
                let mut delta = Array2::zeros(shape);
                for (row, &id) in ids.iter().enumerate() {
                    let mut target = delta.row_mut(id);
                    target += &g.row(row);
                }
                acc(grads, *table, delta);
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::AddBias(x, bias) => {
                acc(grads, *x, g.clone());
                acc(grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::AddConst(x) => acc(grads, *x, g.clone()),
            Op::MulConst(x, constant) => acc(grads, *x, g * constant),
            Op::Scale(x, factor) => acc(grads, *x, g.mapv(|v| v * *factor)),
            Op::MatMul(a, b) => {
                acc(grads, *a, g.dot(&self.value(*b).t()));
                acc(grads, *b, self.value(*a).t().dot(g));
            }
            Op::MatMulTransposeB(a, b) => {
                acc(grads, *a, g.dot(self.value(*b)));
                acc(grads, *b, g.t().dot(self.value(*a)));
            }
            Op::ConcatCols(a, b) => {
                let split = self.value(*a).ncols();
                acc(grads, *a, g.slice(s![.., ..split]).to_owned());
                acc(grads, *b, g.slice(s![.., split..]).to_owned());
            }
            Op::SliceCols { x, start } => {
                let mut delta = Array2::zeros(self.value(*x).raw_dim());
                delta.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                acc(grads, *x, delta);
            }
            Op::SliceRows { x, start } => {
                let mut delta = Array2::zeros(self.value(*x).raw_dim());
                delta.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                acc(grads, *x, delta);
            }
            Op::MeanRows { x, keep } => {
                let count = T::c(keep.iter().filter(|&&k| k).count() as f64);
                let mut delta = Array2::zeros(self.value(*x).raw_dim());
                let per_row = g.row(0).mapv(|v| v / count);
                for (row, &k) in keep.iter().enumerate() {
                    if k {
                        delta.row_mut(row).assign(&per_row);
                    }
                }
                acc(grads, *x, delta);
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let v = self.value(*x);
                let gr = self.value(*gain).row(0).to_owned();
                let n = T::c(v.ncols() as f64);
                let mut dx = Array2::zeros(v.raw_dim());
                let mut dgain = Array1::<T>::zeros(v.ncols());
                let mut dbias = Array1::<T>::zeros(v.ncols());
                for (row_idx, row) in v.outer_iter().enumerate() {
                    let mean = row.sum() / n;
                    let var = row.fold(T::zero(), |acc2, &x| acc2 + (x - mean) * (x - mean)) / n;
                    let inv = (var + *eps).sqrt().recip();
                    let xhat = row.mapv(|x| (x - mean) * inv);
                    let gy = g.row(row_idx);
                    for j in 0..v.ncols() {
                        dgain[j] = dgain[j] + gy[j] * xhat[j];
                        dbias[j] = dbias[j] + gy[j];
                    }
                    let dxhat: Array1<T> =
                        gy.iter().zip(gr.iter()).map(|(&gy, &gn)| gy * gn).collect();
                    let mean_dxhat = dxhat.sum() / n;
                    let mean_dxhat_xhat = dxhat
                        .iter()
                        .zip(xhat.iter())
                        .fold(T::zero(), |acc2, (&d, &h)| acc2 + d * h)
                        / n;
                    let mut dx_row = dx.row_mut(row_idx);
                    for j in 0..v.ncols() {
                        dx_row[j] = (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat) * inv;
                    }
                }
                acc(grads, *x, dx);
                acc(grads, *gain, dgain.insert_axis(Axis(0)));
                acc(grads, *bias, dbias.insert_axis(Axis(0)));
            }
            Op::SoftmaxRows(x) => {
                let y = &self.nodes[i].value;
                let mut dx = Array2::zeros(y.raw_dim());
                for (row_idx, (y_row, g_row)) in y.outer_iter().zip(g.outer_iter()).enumerate() {
                    let dot = y_row
                        .iter()
                        .zip(g_row.iter())
                        .fold(T::zero(), |acc2, (&y, &g)| acc2 + y * g);
                    let mut dx_row = dx.row_mut(row_idx);
                    for j in 0..y_row.len() {
                        dx_row[j] = y_row[j] * (g_row[j] - dot);
                    }
                }
                acc(grads, *x, dx);
            }
            Op::Gelu(x) => {
                let v = self.value(*x);
                acc(grads, *x, g * &v.mapv(gelu_grad_scalar));
            }
            Op::Tanh(x) => {
                let y = &self.nodes[i].value;
                acc(grads, *x, g * &y.mapv(|t| T::one() - t * t));
            }
            Op::Sigmoid(x) => {
                let y = &self.nodes[i].value;
                acc(grads, *x, g * &y.mapv(|s| s * (T::one() - s)));
            }
            Op::BceMean { pred, target, eps } => {
                let p = self.value(*pred);
                let n = T::c(p.len() as f64);
                let scale = g[[0, 0]] / n;
                let mut dp = Array2::zeros(p.raw_dim());
                for ((d, &pi), &ti) in dp.iter_mut().zip(p.iter()).zip(target.iter()) {
                    // Zero gradient where the clamp binds.
                    if pi > *eps && pi < T::one() - *eps {
                        *d = scale * (pi - ti) / (pi * (T::one() - pi));
                    }
                }
                acc(grads, *pred, dp);
            }
        }
    }
}
