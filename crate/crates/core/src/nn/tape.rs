//! Reverse-mode differentiation over dense rank-2 arrays.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s. Calling
//! [`Tape::backward`] on a `1 × 1` result walks the record once in reverse
//! and returns the gradient of that result with respect to every node.
//!
//! ```
//! use tac_core::nn::Tape;
//! use tac_core::Tensor;
//!
//! let tape = Tape::<f64>::new();
//! let x = tape.leaf(Tensor::scalar(3.0));
//! let y = x.mul(x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.wrt(x).unwrap().item(), 6.0);
//! ```

use std::cell::RefCell;
use std::fmt;
use std::ops::Range;
use std::rc::Rc;

use crate::error::NnError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

type Rows = Rc<Vec<Vec<usize>>>;
type Segments = Rc<Vec<Range<usize>>>;

enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    ScaleRows(usize, usize),
    Affine(usize, T),
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Softplus(usize),
    LnClamped(usize, T),
    Softmax(usize),
    SegmentSoftmax(usize, Segments),
    Aggregate(usize, Rows),
    SelectRows(usize, Rc<Vec<usize>>),
    ConcatCols(usize, usize),
    Sum(usize),
    Mean(usize),
    SumSquares(usize),
    MeanCols(usize),
    GradReverse(usize),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Record of a forward computation. Single-threaded; build one per step.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Scalar> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients produced by one backward pass, indexed by node.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`, or `None` when the loss does not depend on it.
    pub fn wrt(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }
}

fn shape_err(op: &'static str, a: (usize, usize), b: (usize, usize)) -> NnError {
    NnError::ShapeMismatch { op, left: a, right: b }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    // log(1 + e^x) without overflow
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn softmax_slice<T: Scalar>(xs: &[T], out: &mut [T]) {
    let m = xs.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let mut z = T::zero();
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = (x - m).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// Input node. Parameters and constants are both leaves; a leaf only
    /// receives a gradient when the loss depends on it.
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value)
    }

    pub fn scalar(&self, x: T) -> Var<'_, T> {
        self.leaf(Tensor::scalar(x))
    }

    fn shape_of(&self, id: usize) -> (usize, usize) {
        self.nodes.borrow()[id].value.shape()
    }

    fn unary(&self, a: usize, op: Op<T>, f: impl FnOnce(&Tensor<T>) -> Tensor<T>) -> Var<'_, T> {
        let value = f(&self.nodes.borrow()[a].value);
        self.push(value, op)
    }

    fn binary(
        &self,
        a: usize,
        b: usize,
        op: Op<T>,
        f: impl FnOnce(&Tensor<T>, &Tensor<T>) -> Tensor<T>,
    ) -> Var<'_, T> {
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[a].value, &nodes[b].value)
        };
        self.push(value, op)
    }

    /// Smallest distance of any recorded ReLU input from 0, or log input
    /// from its clamp, ignoring inputs exactly at the kink. Finite
    /// differences are only meaningful when this exceeds the probe step.
    pub fn kink_margin(&self) -> Option<T> {
        let nodes = self.nodes.borrow();
        let mut margin: Option<T> = None;
        for node in nodes.iter() {
            let (src, at) = match node.op {
                Op::Relu(a) => (a, T::zero()),
                Op::LnClamped(a, eps) => (a, eps),
                _ => continue,
            };
            for &x in nodes[src].value.data() {
                let dist = (x - at).abs();
                if dist > T::zero() {
                    margin = Some(margin.map_or(dist, |m| m.min(dist)));
                }
            }
        }
        margin
    }

    /// Reverse pass from a `1 × 1` loss.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>, NnError> {
        let nodes = self.nodes.borrow();
        let shape = nodes[loss.id].value.shape();
        if shape != (1, 1) {
            return Err(NnError::NonScalarLoss { shape });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::scalar(T::one()));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let val = |i: usize| &nodes[i].value;
            let mut acc = |i: usize, t: Tensor<T>| match &mut grads[i] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    acc(*a, g.zip_map(val(*b), |x, y| x * y));
                    acc(*b, g.zip_map(val(*a), |x, y| x * y));
                }
                Op::AddRow(a, b) => {
                    let (n, m) = g.shape();
                    let mut gb = Tensor::zeros(1, m);
                    for r in 0..n {
                        for (o, &x) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(*a, g.clone());
                    acc(*b, gb);
                }
                Op::ScaleRows(a, w) => {
                    let (n, m) = g.shape();
                    let av = val(*a);
                    let wv = val(*w);
                    let mut ga = Tensor::zeros(n, m);
                    let mut gw = Tensor::zeros(n, 1);
                    for r in 0..n {
                        let k = wv.get(r, 0);
                        let mut s = T::zero();
                        for c in 0..m {
                            ga.set(r, c, g.get(r, c) * k);
                            s += g.get(r, c) * av.get(r, c);
                        }
                        gw.set(r, 0, s);
                    }
                    acc(*a, ga);
                    acc(*w, gw);
                }
                Op::Affine(a, k) => {
                    let k = *k;
                    acc(*a, g.map(|x| x * k));
                }
                Op::MatMul(a, b) => {
                    acc(*a, g.matmul_nt(val(*b)));
                    acc(*b, val(*a).matmul_tn(&g));
                }
                Op::MatMulNt(a, b) => {
                    // out = A Bᵀ
                    acc(*a, g.matmul(val(*b)));
                    acc(*b, g.matmul_tn(val(*a)));
                }
                Op::Relu(a) => {
                    acc(*a, g.zip_map(val(*a), |x, y| if y > T::zero() { x } else { T::zero() }));
                }
                Op::Sigmoid(a) => {
                    let out = &node.value;
                    acc(*a, g.zip_map(out, |x, s| x * s * (T::one() - s)));
                }
                Op::Softplus(a) => {
                    acc(*a, g.zip_map(val(*a), |x, y| x * sigmoid(y)));
                }
                Op::LnClamped(a, eps) => {
                    let lo = *eps;
                    let hi = T::one() - *eps;
                    acc(
                        *a,
                        g.zip_map(val(*a), |x, y| if y < lo || y > hi { T::zero() } else { x / y }),
                    );
                }
                Op::Softmax(a) => {
                    let s = &node.value;
                    let dot: T = g.data().iter().zip(s.data()).map(|(&x, &y)| x * y).sum();
                    acc(*a, g.zip_map(s, |x, y| y * (x - dot)));
                }
                Op::SegmentSoftmax(a, segs) => {
                    let s = &node.value;
                    let mut ga = Tensor::zeros(s.rows(), 1);
                    for seg in segs.iter() {
                        let dot: T = seg.clone().map(|r| g.get(r, 0) * s.get(r, 0)).sum();
                        for r in seg.clone() {
                            ga.set(r, 0, s.get(r, 0) * (g.get(r, 0) - dot));
                        }
                    }
                    acc(*a, ga);
                }
                Op::Aggregate(a, rows) => {
                    let (n, m) = val(*a).shape();
                    let mut ga = Tensor::zeros(n, m);
                    for (out_row, srcs) in rows.iter().enumerate() {
                        let gr = g.row(out_row);
                        for &s in srcs {
                            for (o, &x) in ga.row_mut(s).iter_mut().zip(gr) {
                                *o += x;
                            }
                        }
                    }
                    acc(*a, ga);
                }
                Op::SelectRows(a, idx) => {
                    let (n, m) = val(*a).shape();
                    let mut ga = Tensor::zeros(n, m);
                    for (out_row, &s) in idx.iter().enumerate() {
                        for (o, &x) in ga.row_mut(s).iter_mut().zip(g.row(out_row)) {
                            *o += x;
                        }
                    }
                    acc(*a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let (n, p) = val(*a).shape();
                    let q = val(*b).cols();
                    let mut ga = Tensor::zeros(n, p);
                    let mut gb = Tensor::zeros(n, q);
                    for r in 0..n {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..p]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[p..]);
                    }
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Sum(a) => {
                    let (n, m) = val(*a).shape();
                    acc(*a, Tensor::filled(n, m, g.item()));
                }
                Op::Mean(a) => {
                    let (n, m) = val(*a).shape();
                    let k = g.item() / T::of((n * m) as f64);
                    acc(*a, Tensor::filled(n, m, k));
                }
                Op::SumSquares(a) => {
                    let k = g.item() + g.item();
                    acc(*a, val(*a).map(|x| x * k));
                }
                Op::MeanCols(a) => {
                    let (n, m) = val(*a).shape();
                    let inv = T::one() / T::of(m as f64);
                    let mut ga = Tensor::zeros(n, m);
                    for r in 0..n {
                        let k = g.get(r, 0) * inv;
                        ga.row_mut(r).iter_mut().for_each(|o| *o = k);
                    }
                    acc(*a, ga);
                }
                Op::GradReverse(a) => {
                    acc(*a, g.map(|x| -x));
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

// Shape-checked and fallible, so not the operator traits.
#[allow(clippy::should_implement_trait)]
impl<'t, T: Scalar> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Tensor<T> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// Value of a `1 × 1` node.
    pub fn item(&self) -> T {
        self.tape.nodes.borrow()[self.id].value.item()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.shape_of(self.id)
    }

    fn same_shape(&self, other: Var<'t, T>, op: &'static str) -> Result<(), NnError> {
        let (a, b) = (self.shape(), other.shape());
        if a != b {
            return Err(shape_err(op, a, b));
        }
        Ok(())
    }

    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>, NnError> {
        self.same_shape(other, "add")?;
        Ok(self.tape.binary(self.id, other.id, Op::Add(self.id, other.id), |a, b| a.zip_map(b, |x, y| x + y)))
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>, NnError> {
        self.same_shape(other, "sub")?;
        Ok(self.tape.binary(self.id, other.id, Op::Sub(self.id, other.id), |a, b| a.zip_map(b, |x, y| x - y)))
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>, NnError> {
        self.same_shape(other, "mul")?;
        Ok(self.tape.binary(self.id, other.id, Op::Mul(self.id, other.id), |a, b| a.zip_map(b, |x, y| x * y)))
    }

    /// Adds a `1 × m` row to every row of `self`.
    pub fn add_row(self, row: Var<'t, T>) -> Result<Var<'t, T>, NnError> {
        let (a, b) = (self.shape(), row.shape());
        if b != (1, a.1) {
            return Err(shape_err("add_row", a, b));
        }
        Ok(self.tape.binary(self.id, row.id, Op::AddRow(self.id, row.id), |x, r| {
            let mut out = x.clone();
            for i in 0..out.rows() {
                for (o, &v) in out.row_mut(i).iter_mut().zip(r.data()) {
                    *o += v;
                }
            }
            out
        }))
    }

    /// Multiplies row `i` of `self` by `weights[i, 0]`.
    pub fn scale_rows(self, weights: Var<'t, T>) -> Result<Var<'t, T>, NnError> {
        let (a, b) = (self.shape(), weights.shape());
        if b != (a.0, 1) {
            return Err(shape_err("scale_rows", a, b));
        }
        Ok(self.tape.binary(self.id, weights.id, Op::ScaleRows(self.id, weights.id), |x, w| {
            let mut out = x.clone();
            for i in 0..out.rows() {
                let k = w.get(i, 0);
                out.row_mut(i).iter_mut().for_each(|o| *o *= k);
            }
            out
        }))
    }

    /// `k·self + c`.
    pub fn affine(self, k: T, c: T) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Affine(self.id, k), |a| a.map(|x| k * x + c))
    }

    pub fn scale(self, k: T) -> Var<'t, T> {
        self.affine(k, T::zero())
    }

    pub fn neg(self) -> Var<'t, T> {
        self.affine(-T::one(), T::zero())
    }

    /// `1 − self`.
    pub fn one_minus(self) -> Var<'t, T> {
        self.affine(-T::one(), T::one())
    }

    pub fn matmul(self, other: Var<'t, T>) -> Result<Var<'t, T>, NnError> {
        let (a, b) = (self.shape(), other.shape());
        if a.1 != b.0 {
            return Err(shape_err("matmul", a, b));
        }
        Ok(self.tape.binary(self.id, other.id, Op::MatMul(self.id, other.id), |x, y| x.matmul(y)))
    }

    /// `self · otherᵀ`; with `other` a weight matrix `out × in` this is a
    /// row-batched linear map.
    pub fn matmul_nt(self, other: Var<'t, T>) -> Result<Var<'t, T>, NnError> {
        let (a, b) = (self.shape(), other.shape());
        if a.1 != b.1 {
            return Err(shape_err("matmul_nt", a, b));
        }
        Ok(self.tape.binary(self.id, other.id, Op::MatMulNt(self.id, other.id), |x, y| x.matmul_nt(y)))
    }

    pub fn relu(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Relu(self.id), |a| a.map(|x| if x > T::zero() { x } else { T::zero() }))
    }

    pub fn sigmoid(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Sigmoid(self.id), |a| a.map(sigmoid))
    }

    /// `ln(1 + eˣ)`.
    pub fn softplus(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Softplus(self.id), |a| a.map(softplus))
    }

    /// `ln(clamp(x, eps, 1 − eps))`; the clamped region has zero gradient.
    pub fn ln_clamped(self, eps: T) -> Var<'t, T> {
        let hi = T::one() - eps;
        self.tape.unary(self.id, Op::LnClamped(self.id, eps), |a| a.map(|x| x.max(eps).min(hi).ln()))
    }

    /// Softmax over every entry.
    pub fn softmax(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Softmax(self.id), |a| {
            let mut out = a.clone();
            softmax_slice(a.data(), out.data_mut());
            out
        })
    }

    /// Softmax of an `n × 1` column within each row range.
    pub fn segment_softmax(self, segments: Rc<Vec<Range<usize>>>) -> Result<Var<'t, T>, NnError> {
        let (n, m) = self.shape();
        if m != 1 || segments.iter().any(|s| s.end > n) {
            return Err(shape_err("segment_softmax", (n, m), (segments.len(), 1)));
        }
        let segs = segments.clone();
        Ok(self.tape.unary(self.id, Op::SegmentSoftmax(self.id, segments), move |a| {
            let mut out = a.clone();
            for s in segs.iter() {
                let src = a.data()[s.clone()].to_vec();
                softmax_slice(&src, &mut out.data_mut()[s.clone()]);
            }
            out
        }))
    }

    /// Row `i` of the result is the sum of the rows of `self` listed in
    /// `rows[i]`; an empty list yields a zero row.
    pub fn aggregate(self, rows: Rc<Vec<Vec<usize>>>) -> Result<Var<'t, T>, NnError> {
        let (n, m) = self.shape();
        if rows.iter().flatten().any(|&r| r >= n) {
            return Err(shape_err("aggregate", (n, m), (rows.len(), m)));
        }
        let idx = rows.clone();
        Ok(self.tape.unary(self.id, Op::Aggregate(self.id, rows), move |a| {
            let mut out = Tensor::zeros(idx.len(), m);
            for (o, srcs) in idx.iter().enumerate() {
                let orow = out.row_mut(o);
                for &s in srcs {
                    for (x, &y) in orow.iter_mut().zip(a.row(s)) {
                        *x += y;
                    }
                }
            }
            out
        }))
    }

    pub fn select_rows(self, idx: Rc<Vec<usize>>) -> Result<Var<'t, T>, NnError> {
        let (n, m) = self.shape();
        if idx.iter().any(|&r| r >= n) {
            return Err(shape_err("select_rows", (n, m), (idx.len(), m)));
        }
        let sel = idx.clone();
        Ok(self.tape.unary(self.id, Op::SelectRows(self.id, idx), move |a| {
            let mut out = Tensor::zeros(sel.len(), m);
            for (o, &s) in sel.iter().enumerate() {
                out.row_mut(o).copy_from_slice(a.row(s));
            }
            out
        }))
    }

    /// Contiguous block of rows `range`.
    pub fn rows(self, range: Range<usize>) -> Result<Var<'t, T>, NnError> {
        self.select_rows(Rc::new(range.collect()))
    }

    pub fn concat_cols(self, other: Var<'t, T>) -> Result<Var<'t, T>, NnError> {
        let (a, b) = (self.shape(), other.shape());
        if a.0 != b.0 {
            return Err(shape_err("concat_cols", a, b));
        }
        Ok(self.tape.binary(self.id, other.id, Op::ConcatCols(self.id, other.id), |x, y| {
            let mut out = Tensor::zeros(x.rows(), x.cols() + y.cols());
            for r in 0..x.rows() {
                out.row_mut(r)[..x.cols()].copy_from_slice(x.row(r));
                out.row_mut(r)[x.cols()..].copy_from_slice(y.row(r));
            }
            out
        }))
    }

    pub fn sum(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Sum(self.id), |a| Tensor::scalar(a.sum()))
    }

    /// Mean of all entries; zero for an empty tensor.
    pub fn mean(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::Mean(self.id), |a| {
            if a.is_empty() {
                Tensor::scalar(T::zero())
            } else {
                Tensor::scalar(a.sum() / T::of(a.len() as f64))
            }
        })
    }

    pub fn sum_squares(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::SumSquares(self.id), |a| Tensor::scalar(a.sum_squares()))
    }

    /// Mean across columns: `n × m → n × 1`.
    pub fn mean_cols(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::MeanCols(self.id), |a| {
            let inv = T::one() / T::of(a.cols() as f64);
            Tensor::column_vector((0..a.rows()).map(|r| a.row(r).iter().copied().sum::<T>() * inv).collect())
        })
    }

    /// Identity forward; negates the incoming gradient on the way back.
    pub fn grad_reverse(self) -> Var<'t, T> {
        self.tape.unary(self.id, Op::GradReverse(self.id), Tensor::clone)
    }
}
