use std::cell::{Cell, Ref, RefCell};

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    LeakyRelu(Var, f64),
    /// Run boundaries `[start, end)` over the rows of the input column.
    SegmentSoftmax(Var, Vec<(usize, usize)>),
    Mean(Vec<Var>),
    Dot(Var, Var),
    L2Normalize(Var, Vec<f64>),
    Exp(Var),
    Log(Var),
    Sum(Var),
    MeanRows(Var),
    MaskColumns(Var, Vec<bool>),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    ScaleRows(Var, Var),
    AddColBroadcast(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records tensor operations in execution order and replays them backwards.
///
/// A tape is single-threaded; build one per worker.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    backward_done: Cell<bool>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of the given shape when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Re-arms the tape after a backward pass. Recorded values are kept.
    pub fn reset(&self) {
        self.backward_done.set(false);
    }

    /// Trainable leaf.
    pub fn param(&self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    fn push_unchecked(&self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn push(&self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| nodes[v.0].requires_grad)
        };
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (av, bv) = (self.value(a), self.value(b));
            if av.cols() != bv.rows() {
                return Err(Error::Shape {
                    op: "matmul",
                    left: av.shape(),
                    right: bv.shape(),
                });
            }
            let mut out = Tensor::zeros(av.rows(), bv.cols());
            gemm(&av, false, &bv, false, &mut out, false);
            out
        };
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose();
        self.push("transpose", out, Op::Transpose(a), &[a])
    }

    fn zip_with(&self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        check_same(name, &av, &bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::from_vec(av.rows(), av.cols(), data)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("add", a, b, |x, y| x + y)?;
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("sub", a, b, |x, y| x - y)?;
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("mul", a, b, |x, y| x * y)?;
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * c);
        self.push("scale", out, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x + c);
        self.push("add_scalar", out, Op::AddScalar(a), &[a])
    }

    /// Places the inputs side by side: every output row is the concatenation
    /// of the corresponding input rows.
    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::op("concat_cols", "no inputs"));
        }
        let out = {
            let vals: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
            let rows = vals[0].rows();
            for v in &vals[1..] {
                if v.rows() != rows {
                    return Err(Error::Shape {
                        op: "concat_cols",
                        left: vals[0].shape(),
                        right: v.shape(),
                    });
                }
            }
            let cols: usize = vals.iter().map(|v| v.cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for v in &vals {
                    data.extend_from_slice(v.row(r));
                }
            }
            Tensor::from_vec(rows, cols, data)?
        };
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Stacks the inputs vertically.
    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::op("concat_rows", "no inputs"));
        }
        let out = {
            let vals: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
            let cols = vals[0].cols();
            let mut data = Vec::new();
            let mut rows = 0;
            for v in &vals {
                if v.cols() != cols {
                    return Err(Error::Shape {
                        op: "concat_rows",
                        left: vals[0].shape(),
                        right: v.shape(),
                    });
                }
                data.extend_from_slice(v.data());
                rows += v.rows();
            }
            Tensor::from_vec(rows, cols, data)?
        };
        self.push("concat_rows", out, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn slice_rows(&self, a: Var, start: usize, len: usize) -> Result<Var> {
        let out = {
            let av = self.value(a);
            if start + len > av.rows() {
                return Err(Error::Shape {
                    op: "slice_rows",
                    left: av.shape(),
                    right: (start + len, av.cols()),
                });
            }
            let c = av.cols();
            Tensor::from_vec(len, c, av.data()[start * c..(start + len) * c].to_vec())?
        };
        self.push("slice_rows", out, Op::SliceRows(a, start), &[a])
    }

    pub fn leaky_relu(&self, a: Var, slope: f64) -> Result<Var> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push("leaky_relu", out, Op::LeakyRelu(a, slope), &[a])
    }

    /// Softmax over runs of equal ids in a column of scores. Ids must be
    /// sorted so that each segment is contiguous.
    pub fn segment_softmax(&self, scores: Var, segment_ids: &[usize]) -> Result<Var> {
        let (out, runs) = {
            let s = self.value(scores);
            if s.cols() != 1 || s.rows() != segment_ids.len() {
                return Err(Error::Shape {
                    op: "segment_softmax",
                    left: s.shape(),
                    right: (segment_ids.len(), 1),
                });
            }
            if segment_ids.is_empty() {
                return Err(Error::op("segment_softmax", "softmax over an empty segment"));
            }
            if segment_ids.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::op("segment_softmax", "segment ids are not sorted"));
            }
            let mut runs = Vec::new();
            let mut start = 0;
            for i in 1..=segment_ids.len() {
                if i == segment_ids.len() || segment_ids[i] != segment_ids[start] {
                    runs.push((start, i));
                    start = i;
                }
            }
            let x = s.data();
            let mut y = vec![0.0; x.len()];
            for &(a, b) in &runs {
                let m = x[a..b].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for i in a..b {
                    y[i] = (x[i] - m).exp();
                    z += y[i];
                }
                for yi in &mut y[a..b] {
                    *yi /= z;
                }
            }
            (Tensor::column_vector(y), runs)
        };
        self.push("segment_softmax", out, Op::SegmentSoftmax(scores, runs), &[scores])
    }

    /// Elementwise mean of equally shaped tensors.
    pub fn mean(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::op("mean", "no inputs"));
        }
        let out = {
            let first = self.value(parts[0]);
            let mut acc = first.clone();
            drop(first);
            for &p in &parts[1..] {
                let v = self.value(p);
                check_same("mean", &acc, &v)?;
                acc.add_assign(&v);
            }
            let n = parts.len() as f64;
            acc.map(|x| x / n)
        };
        self.push("mean", out, Op::Mean(parts.to_vec()), parts)
    }

    /// Sum of the elementwise product, as a `1 × 1` tensor.
    pub fn dot(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (av, bv) = (self.value(a), self.value(b));
            check_same("dot", &av, &bv)?;
            Tensor::scalar(av.data().iter().zip(bv.data()).map(|(x, y)| x * y).sum())
        };
        self.push("dot", out, Op::Dot(a, b), &[a, b])
    }

    /// Scales every row to unit L2 norm. A zero row is an error.
    pub fn l2_normalize(&self, a: Var) -> Result<Var> {
        let (out, norms) = {
            let av = self.value(a);
            let mut out = av.clone();
            let mut norms = Vec::with_capacity(av.rows());
            for r in 0..av.rows() {
                let n = av.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
                if n == 0.0 {
                    return Err(Error::op("l2_normalize", format!("row {r} has zero norm")));
                }
                out.row_mut(r).iter_mut().for_each(|x| *x /= n);
                norms.push(n);
            }
            (out, norms)
        };
        self.push("l2_normalize", out, Op::L2Normalize(a, norms), &[a])
    }

    pub fn exp(&self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::exp);
        self.push("exp", out, Op::Exp(a), &[a])
    }

    pub fn log(&self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::ln);
        self.push("log", out, Op::Log(a), &[a])
    }

    pub fn sum(&self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        self.push("sum", out, Op::Sum(a), &[a])
    }

    /// Column-wise mean over rows, giving a `1 × cols` row.
    pub fn mean_rows(&self, a: Var) -> Result<Var> {
        let out = {
            let av = self.value(a);
            if av.rows() == 0 {
                return Err(Error::op("mean_rows", "no rows"));
            }
            let mut acc = vec![0.0; av.cols()];
            for r in 0..av.rows() {
                for (s, x) in acc.iter_mut().zip(av.row(r)) {
                    *s += x;
                }
            }
            let n = av.rows() as f64;
            Tensor::row_vector(acc.into_iter().map(|s| s / n).collect())
        };
        self.push("mean_rows", out, Op::MeanRows(a), &[a])
    }

    /// Zeroes every column `c` with `mask[c] == true`.
    pub fn mask_columns(&self, a: Var, mask: &[bool]) -> Result<Var> {
        let out = {
            let av = self.value(a);
            if mask.len() != av.cols() {
                return Err(Error::Shape {
                    op: "mask_columns",
                    left: av.shape(),
                    right: (1, mask.len()),
                });
            }
            let mut out = av.clone();
            for r in 0..out.rows() {
                for (x, &m) in out.row_mut(r).iter_mut().zip(mask) {
                    if m {
                        *x = 0.0;
                    }
                }
            }
            out
        };
        self.push("mask_columns", out, Op::MaskColumns(a, mask.to_vec()), &[a])
    }

    /// `out[i] = a[index[i]]`.
    pub fn gather_rows(&self, a: Var, index: &[usize]) -> Result<Var> {
        let out = {
            let av = self.value(a);
            let c = av.cols();
            let mut data = Vec::with_capacity(index.len() * c);
            for &i in index {
                if i >= av.rows() {
                    return Err(Error::op("gather_rows", format!("row {i} out of range for {:?}", av.shape())));
                }
                data.extend_from_slice(av.row(i));
            }
            Tensor::from_vec(index.len(), c, data)?
        };
        self.push("gather_rows", out, Op::GatherRows(a, index.to_vec()), &[a])
    }

    /// `out[index[i]] += a[i]` into a zero matrix with `rows` rows.
    pub fn scatter_add_rows(&self, a: Var, index: &[usize], rows: usize) -> Result<Var> {
        let out = {
            let av = self.value(a);
            if index.len() != av.rows() {
                return Err(Error::Shape {
                    op: "scatter_add_rows",
                    left: av.shape(),
                    right: (index.len(), av.cols()),
                });
            }
            let mut out = Tensor::zeros(rows, av.cols());
            for (i, &t) in index.iter().enumerate() {
                if t >= rows {
                    return Err(Error::op("scatter_add_rows", format!("target row {t} out of range {rows}")));
                }
                for (o, x) in out.row_mut(t).iter_mut().zip(av.row(i)) {
                    *o += x;
                }
            }
            out
        };
        self.push("scatter_add_rows", out, Op::ScatterAddRows(a, index.to_vec()), &[a])
    }

    /// Multiplies row `i` of `a` by `w[i]`, where `w` is a column.
    pub fn scale_rows(&self, a: Var, w: Var) -> Result<Var> {
        let out = {
            let (av, wv) = (self.value(a), self.value(w));
            if wv.cols() != 1 || wv.rows() != av.rows() {
                return Err(Error::Shape {
                    op: "scale_rows",
                    left: av.shape(),
                    right: wv.shape(),
                });
            }
            let mut out = av.clone();
            for r in 0..out.rows() {
                let s = wv.data()[r];
                out.row_mut(r).iter_mut().for_each(|x| *x *= s);
            }
            out
        };
        self.push("scale_rows", out, Op::ScaleRows(a, w), &[a, w])
    }

    /// Adds `s[i]` to every entry of row `i` of `a`, where `s` is a column.
    pub fn add_col_broadcast(&self, a: Var, s: Var) -> Result<Var> {
        let out = {
            let (av, sv) = (self.value(a), self.value(s));
            if sv.cols() != 1 || sv.rows() != av.rows() {
                return Err(Error::Shape {
                    op: "add_col_broadcast",
                    left: av.shape(),
                    right: sv.shape(),
                });
            }
            let mut out = av.clone();
            for r in 0..out.rows() {
                let add = sv.data()[r];
                out.row_mut(r).iter_mut().for_each(|x| *x += add);
            }
            out
        };
        self.push("add_col_broadcast", out, Op::AddColBroadcast(a, s), &[a, s])
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let shape = self.shape(output);
        if shape != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                left: shape,
                right: (1, 1),
            });
        }
        self.backward_with(output, Tensor::scalar(1.0))
    }

    /// Reverse pass seeded with an arbitrary upstream gradient for `output`.
    pub fn backward_with(&self, output: Var, seed: Tensor) -> Result<Gradients> {
        if self.backward_done.get() {
            return Err(Error::BackwardTwice);
        }
        let nodes = self.nodes.borrow();
        check_same("backward", &nodes[output.0].value, &seed)?;
        self.backward_done.set(true);

        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);

        for id in (0..=output.0).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if !g.is_finite() {
                return Err(Error::NonFinite { op: "backward" });
            }
            let val = |v: Var| &nodes[v.0].value;
            let mut acc = |v: Var, t: Tensor| {
                if !nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(e) => e.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    gemm(&g, false, bv, true, &mut da, false);
                    let mut db = Tensor::zeros(bv.rows(), bv.cols());
                    gemm(av, true, &g, false, &mut db, false);
                    acc(*a, da);
                    acc(*b, db);
                }
                Op::Transpose(a) => acc(*a, g.transpose()),
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|x| -x));
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let da = zip(&g, bv, |x, y| x * y);
                    let db = zip(&g, av, |x, y| x * y);
                    acc(*a, da);
                    acc(*b, db);
                }
                Op::Scale(a, c) => acc(*a, g.map(|x| x * c)),
                Op::AddScalar(a) => acc(*a, g),
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let pc = val(*p).cols();
                        let mut piece = Tensor::zeros(g.rows(), pc);
                        for r in 0..g.rows() {
                            piece.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + pc]);
                        }
                        offset += pc;
                        acc(*p, piece);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    let c = g.cols();
                    for p in parts {
                        let pr = val(*p).rows();
                        let piece = Tensor::from_vec(pr, c, g.data()[offset * c..(offset + pr) * c].to_vec())?;
                        offset += pr;
                        acc(*p, piece);
                    }
                }
                Op::SliceRows(a, start) => {
                    let av = val(*a);
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    let c = av.cols();
                    da.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    acc(*a, da);
                }
                Op::LeakyRelu(a, slope) => {
                    let av = val(*a);
                    acc(*a, zip(&g, av, |gi, x| if x > 0.0 { gi } else { slope * gi }));
                }
                Op::SegmentSoftmax(a, runs) => {
                    let y = node.value.data();
                    let gd = g.data();
                    let mut ds = vec![0.0; y.len()];
                    for &(s, e) in runs {
                        let inner: f64 = (s..e).map(|i| y[i] * gd[i]).sum();
                        for i in s..e {
                            ds[i] = y[i] * (gd[i] - inner);
                        }
                    }
                    acc(*a, Tensor::column_vector(ds));
                }
                Op::Mean(parts) => {
                    let n = parts.len() as f64;
                    let share = g.map(|x| x / n);
                    for p in parts {
                        acc(*p, share.clone());
                    }
                }
                Op::Dot(a, b) => {
                    let gs = g.item();
                    let (av, bv) = (val(*a), val(*b));
                    acc(*a, bv.map(|x| x * gs));
                    acc(*b, av.map(|x| x * gs));
                }
                Op::L2Normalize(a, norms) => {
                    let y = &node.value;
                    let mut da = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let proj: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (c, d) in da.row_mut(r).iter_mut().enumerate() {
                            *d = (gr[c] - yr[c] * proj) / norms[r];
                        }
                    }
                    acc(*a, da);
                }
                Op::Exp(a) => acc(*a, zip(&g, &node.value, |gi, y| gi * y)),
                Op::Log(a) => acc(*a, zip(&g, val(*a), |gi, x| gi / x)),
                Op::Sum(a) => {
                    let (r, c) = val(*a).shape();
                    acc(*a, Tensor::filled(r, c, g.item()));
                }
                Op::MeanRows(a) => {
                    let (r, c) = val(*a).shape();
                    let mut da = Tensor::zeros(r, c);
                    let n = r as f64;
                    for i in 0..r {
                        for (d, x) in da.row_mut(i).iter_mut().zip(g.row(0)) {
                            *d = x / n;
                        }
                    }
                    acc(*a, da);
                }
                Op::MaskColumns(a, mask) => {
                    let mut da = g;
                    for r in 0..da.rows() {
                        for (x, &m) in da.row_mut(r).iter_mut().zip(mask) {
                            if m {
                                *x = 0.0;
                            }
                        }
                    }
                    acc(*a, da);
                }
                Op::GatherRows(a, index) => {
                    let (r, c) = val(*a).shape();
                    let mut da = Tensor::zeros(r, c);
                    for (i, &src) in index.iter().enumerate() {
                        for (d, x) in da.row_mut(src).iter_mut().zip(g.row(i)) {
                            *d += x;
                        }
                    }
                    acc(*a, da);
                }
                Op::ScatterAddRows(a, index) => {
                    let c = g.cols();
                    let mut da = Tensor::zeros(index.len(), c);
                    for (i, &t) in index.iter().enumerate() {
                        da.row_mut(i).copy_from_slice(g.row(t));
                    }
                    acc(*a, da);
                }
                Op::ScaleRows(a, w) => {
                    let (av, wv) = (val(*a), val(*w));
                    let mut da = g.clone();
                    let mut dw = vec![0.0; wv.rows()];
                    for r in 0..av.rows() {
                        let s = wv.data()[r];
                        dw[r] = av.row(r).iter().zip(g.row(r)).map(|(x, y)| x * y).sum();
                        da.row_mut(r).iter_mut().for_each(|x| *x *= s);
                    }
                    acc(*a, da);
                    acc(*w, Tensor::column_vector(dw));
                }
                Op::AddColBroadcast(a, s) => {
                    let ds: Vec<f64> = (0..g.rows()).map(|r| g.row(r).iter().sum()).collect();
                    acc(*s, Tensor::column_vector(ds));
                    acc(*a, g);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}
