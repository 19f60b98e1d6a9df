//! Reverse-mode differentiation tape.
//!
//! A [`Graph`] records every operation as a node holding its forward value. Calling
//! [`Graph::backward`] walks the nodes in reverse and accumulates gradients for every
//! node that depends on an input leaf. Tensors are treated as 2-D `[rows x cols]`
//! matrices by every operation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{Error, Result};
use crate::math::{exp, ln_1p, sigmoid, sqrt};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

/// Precomputed trilinear interpolation of one point from 8 grid rows.
#[derive(Debug, Clone)]
pub struct TrilinearTap {
    /// Source rows for the corners, ordered by bit pattern (bit 0 = x, 1 = y, 2 = z).
    pub rows: [usize; 8],
    /// Fractional position inside the cell along each axis.
    pub frac: [f64; 3],
    /// d(frac)/d(coordinate) per axis; zero where the coordinate was clamped.
    pub dfrac: [f64; 3],
}

impl TrilinearTap {
    pub fn weight(&self, corner: usize) -> f64 {
        (0..3)
            .map(|a| if corner >> a & 1 == 1 { self.frac[a] } else { 1.0 - self.frac[a] })
            .product()
    }

    fn dweight(&self, corner: usize, axis: usize) -> f64 {
        let mut w = self.dfrac[axis] * if corner >> axis & 1 == 1 { 1.0 } else { -1.0 };
        for a in 0..3 {
            if a != axis {
                w *= if corner >> a & 1 == 1 { self.frac[a] } else { 1.0 - self.frac[a] };
            }
        }
        w
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    Transpose(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Gather(Var, Vec<usize>),
    Reshape(Var),
    GroupMax(Var, Vec<usize>),
    Combine(Var, Vec<Vec<(usize, f64)>>),
    Trilinear {
        grid: Var,
        coords: Var,
        taps: Vec<TrilinearTap>,
    },
    Sum(Var),
    SmoothL1(Var),
    BceLogits(Var, Vec<f64>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A single-threaded differentiation tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn shape_err(what: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape()))
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool, name: &str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(String::from(name)));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A differentiable leaf (parameter or checked input).
    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, true, "input")
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, false, "constant")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, k) = dims(ta);
        let (k2, m) = dims(tb);
        if k != k2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = vec![0.0; n * m];
        let (ad, bd) = (ta.data(), tb.data());
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let av = ad[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &bd[p * m..(p + 1) * m];
                for (o, bv) in row.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        let ng = self.needs(a) || self.needs(b);
        self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b), ng, "matmul")
    }

    fn zip_same(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(what, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(t, op, ng, what)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a `[1 x m]` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        let (n, m) = dims(ta);
        if tr.rows() != 1 || tr.cols() != m {
            return Err(shape_err("add_row", ta, tr));
        }
        let mut data = ta.data().to_vec();
        for i in 0..n {
            for (o, r) in data[i * m..(i + 1) * m].iter_mut().zip(tr.data()) {
                *o += r;
            }
        }
        let ng = self.needs(a) || self.needs(row);
        self.push(Tensor::matrix(n, m, data)?, Op::AddRow(a, row), ng, "add_row")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|x| x * s).collect();
        let t = Tensor::new(t.shape().to_vec(), data)?;
        let ng = self.needs(a);
        self.push(t, Op::Scale(a, s), ng, "scale")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let t = Tensor::new(t.shape().to_vec(), data)?;
        let ng = self.needs(a);
        self.push(t, Op::Relu(a), ng, "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| sigmoid(x)).collect();
        let t = Tensor::new(t.shape().to_vec(), data)?;
        let ng = self.needs(a);
        self.push(t, Op::Sigmoid(a), ng, "sigmoid")
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (n, m) = dims(t);
        let mut data = t.data().to_vec();
        for i in 0..n {
            let row = &mut data[i * m..(i + 1) * m];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = exp(*v - mx);
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let ng = self.needs(a);
        self.push(Tensor::matrix(n, m, data)?, Op::SoftmaxRows(a), ng, "softmax")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (n, m) = dims(t);
        let d = t.data();
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                data[j * n + i] = d[i * m + j];
            }
        }
        let ng = self.needs(a);
        self.push(Tensor::matrix(m, n, data)?, Op::Transpose(a), ng, "transpose")
    }

    /// Per-row normalization with `[1 x m]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let (n, m) = dims(tx);
        if tg.rows() != 1 || tg.cols() != m || tb.rows() != 1 || tb.cols() != m {
            return Err(shape_err("layer_norm", tx, tg));
        }
        let mut xhat = vec![0.0; n * m];
        let mut inv_std = vec![0.0; n];
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &tx.data()[i * m..(i + 1) * m];
            let mean = row.iter().sum::<f64>() / m as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let is = 1.0 / sqrt(var + eps);
            inv_std[i] = is;
            for j in 0..m {
                let h = (row[j] - mean) * is;
                xhat[i * m + j] = h;
                out[i * m + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        let ng = self.needs(x) || self.needs(gain) || self.needs(bias);
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        };
        self.push(Tensor::matrix(n, m, out)?, op, ng, "layer_norm")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let n = parts.first().map(|&p| self.value(p).rows()).ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != n {
                return Err(shape_err("concat_cols", self.value(parts[0]), t));
            }
            total += t.cols();
        }
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(Tensor::matrix(n, total, data)?, Op::ConcatCols(parts.to_vec()), ng, "concat_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let m = parts.first().map(|&p| self.value(p).cols()).ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.cols() != m {
                return Err(shape_err("concat_rows", self.value(parts[0]), t));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(Tensor::matrix(rows, m, data)?, Op::ConcatRows(parts.to_vec()), ng, "concat_rows")
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let (n, m) = dims(t);
        if start > end || end > m {
            return Err(Error::Shape(format!("slice {start}..{end} of {:?}", t.shape())));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(n * w);
        for i in 0..n {
            data.extend_from_slice(&t.row(i)[start..end]);
        }
        let ng = self.needs(a);
        self.push(Tensor::matrix(n, w, data)?, Op::SliceCols(a, start), ng, "slice_cols")
    }

    /// Selects rows by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (n, m) = dims(t);
        let mut data = Vec::with_capacity(idx.len() * m);
        for &i in idx {
            if i >= n {
                return Err(Error::Shape(format!("gather row {i} of {:?}", t.shape())));
            }
            data.extend_from_slice(t.row(i));
        }
        let ng = self.needs(a);
        self.push(Tensor::matrix(idx.len(), m, data)?, Op::Gather(a, idx.to_vec()), ng, "gather_rows")
    }

    /// Reinterprets the row-major data under a new 2-D shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.value(a);
        if rows * cols != t.len() {
            return Err(Error::Shape(format!("reshape {:?} to [{rows}, {cols}]", t.shape())));
        }
        let t = Tensor::matrix(rows, cols, t.data().to_vec())?;
        let ng = self.needs(a);
        self.push(t, Op::Reshape(a), ng, "reshape")
    }

    /// Column-wise max over consecutive groups of `group` rows.
    pub fn group_max(&mut self, a: Var, group: usize) -> Result<Var> {
        let t = self.value(a);
        let (n, m) = dims(t);
        if group == 0 || n % group != 0 {
            return Err(Error::Shape(format!("group_max of {:?} by {group}", t.shape())));
        }
        let g = n / group;
        let mut out = vec![f64::NEG_INFINITY; g * m];
        let mut arg = vec![0usize; g * m];
        for r in 0..n {
            let o = r / group;
            for j in 0..m {
                let v = t.data()[r * m + j];
                if v > out[o * m + j] {
                    out[o * m + j] = v;
                    arg[o * m + j] = r;
                }
            }
        }
        let ng = self.needs(a);
        self.push(Tensor::matrix(g, m, out)?, Op::GroupMax(a, arg), ng, "group_max")
    }

    /// Output row `r` is `sum(w * a[i])` over the `(i, w)` pairs of `rows[r]`.
    pub fn combine_rows(&mut self, a: Var, rows: Vec<Vec<(usize, f64)>>) -> Result<Var> {
        let t = self.value(a);
        let (n, m) = dims(t);
        let mut data = vec![0.0; rows.len() * m];
        for (r, terms) in rows.iter().enumerate() {
            for &(i, w) in terms {
                if i >= n {
                    return Err(Error::Shape(format!("combine row {i} of {:?}", t.shape())));
                }
                for j in 0..m {
                    data[r * m + j] += w * t.data()[i * m + j];
                }
            }
        }
        let count = rows.len();
        let ng = self.needs(a);
        self.push(Tensor::matrix(count, m, data)?, Op::Combine(a, rows), ng, "combine_rows")
    }

    /// Interpolates rows of `grid` at points described by `taps`; `coords` is the
    /// `[points x 3]` tensor the fractional offsets were computed from.
    pub fn trilinear(&mut self, grid: Var, coords: Var, taps: Vec<TrilinearTap>) -> Result<Var> {
        let (tg, tc) = (self.value(grid), self.value(coords));
        let (n, m) = dims(tg);
        if tc.rows() != taps.len() || tc.cols() != 3 {
            return Err(shape_err("trilinear", tg, tc));
        }
        let mut data = vec![0.0; taps.len() * m];
        for (p, tap) in taps.iter().enumerate() {
            for c in 0..8 {
                let r = tap.rows[c];
                if r >= n {
                    return Err(Error::Shape(format!("trilinear row {r} of {:?}", tg.shape())));
                }
                let w = tap.weight(c);
                for j in 0..m {
                    data[p * m + j] += w * tg.data()[r * m + j];
                }
            }
        }
        let ng = self.needs(grid) || self.needs(coords);
        let t = Tensor::matrix(taps.len(), m, data)?;
        self.push(t, Op::Trilinear { grid, coords, taps }, ng, "trilinear")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let ng = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::Shape("mean of an empty tensor".into()));
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Elementwise smooth-L1 (Huber with beta = 1).
    pub fn smooth_l1(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let data = t
            .data()
            .iter()
            .map(|&x| if x.abs() < 1.0 { 0.5 * x * x } else { x.abs() - 0.5 })
            .collect();
        let t = Tensor::new(t.shape().to_vec(), data)?;
        let ng = self.needs(a);
        self.push(t, Op::SmoothL1(a), ng, "smooth_l1")
    }

    /// Elementwise binary cross-entropy between `sigmoid(logits)` and `targets`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let t = self.value(logits);
        if t.len() != targets.len() {
            return Err(Error::Shape(format!("bce logits {:?} vs {} targets", t.shape(), targets.len())));
        }
        // max(x, 0) - x*y + log(1 + exp(-|x|))
        let data = t
            .data()
            .iter()
            .zip(targets)
            .map(|(&x, &y)| x.max(0.0) - x * y + ln_1p(exp(-x.abs())))
            .collect();
        let t = Tensor::new(t.shape().to_vec(), data)?;
        let ng = self.needs(logits);
        self.push(t, Op::BceLogits(logits, targets.to_vec()), ng, "bce_with_logits")
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn acc(grads: &mut [Option<Vec<f64>>], nodes: &[Node], v: Var, f: impl FnOnce(&mut [f64])) {
        if !nodes[v.0].needs_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
        f(slot);
    }

    /// Back-propagates from `out`, seeding its gradient with ones.
    pub fn backward(&mut self, out: Var) -> Result<()> {
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[out.0] = Some(vec![1.0; nodes[out.0].value.len()]);
        for id in (0..=out.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let val = &node.value;
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let k = dims(ta).1;
                    let m = tb.cols();
                    let (ad, bd) = (ta.data(), tb.data());
                    if k == 0 || m == 0 {
                        continue;
                    }
                    Self::acc(&mut grads, nodes, *a, |ga| {
                        // dA = dY B^T, accumulated row by row against B^T so the inner loop is contiguous
                        let mut bt = vec![0.0; m * k];
                        for (p, brow) in bd.chunks_exact(m).enumerate() {
                            for (j, &v) in brow.iter().enumerate() {
                                bt[j * k + p] = v;
                            }
                        }
                        for (grow, garow) in g.chunks_exact(m).zip(ga.chunks_exact_mut(k)) {
                            for (&gv, btrow) in grow.iter().zip(bt.chunks_exact(k)) {
                                if gv == 0.0 {
                                    continue;
                                }
                                for (o, y) in garow.iter_mut().zip(btrow) {
                                    *o += gv * y;
                                }
                            }
                        }
                    });
                    Self::acc(&mut grads, nodes, *b, |gb| {
                        for (grow, arow) in g.chunks_exact(m).zip(ad.chunks_exact(k)) {
                            for (&av, gbrow) in arow.iter().zip(gb.chunks_exact_mut(m)) {
                                if av == 0.0 {
                                    continue;
                                }
                                for (o, x) in gbrow.iter_mut().zip(grow) {
                                    *o += av * x;
                                }
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    Self::acc(&mut grads, nodes, *a, |ga| ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                    Self::acc(&mut grads, nodes, *b, |gb| gb.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                }
                Op::Sub(a, b) => {
                    Self::acc(&mut grads, nodes, *a, |ga| ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                    Self::acc(&mut grads, nodes, *b, |gb| gb.iter_mut().zip(&g).for_each(|(x, y)| *x -= y));
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                    Self::acc(&mut grads, nodes, *a, |ga| {
                        for i in 0..ga.len() {
                            ga[i] += g[i] * tb.data()[i];
                        }
                    });
                    Self::acc(&mut grads, nodes, *b, |gb| {
                        for i in 0..gb.len() {
                            gb[i] += g[i] * ta.data()[i];
                        }
                    });
                }
                Op::AddRow(a, row) => {
                    let m = val.cols();
                    Self::acc(&mut grads, nodes, *a, |ga| ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                    Self::acc(&mut grads, nodes, *row, |gr| {
                        for (i, v) in g.iter().enumerate() {
                            gr[i % m] += v;
                        }
                    });
                }
                Op::Scale(a, s) => {
                    Self::acc(&mut grads, nodes, *a, |ga| ga.iter_mut().zip(&g).for_each(|(x, y)| *x += s * y));
                }
                Op::Relu(a) => {
                    let ta = &nodes[a.0].value;
                    Self::acc(&mut grads, nodes, *a, |ga| {
                        for i in 0..ga.len() {
                            if ta.data()[i] > 0.0 {
                                ga[i] += g[i];
                            }
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    Self::acc(&mut grads, nodes, *a, |ga| {
                        for i in 0..ga.len() {
                            let s = val.data()[i];
                            ga[i] += g[i] * s * (1.0 - s);
                        }
                    });
                }
                Op::SoftmaxRows(a) => {
                    let (n, m) = dims(val);
                    Self::acc(&mut grads, nodes, *a, |ga| {
                        for i in 0..n {
                            let y = &val.data()[i * m..(i + 1) * m];
                            let gy = &g[i * m..(i + 1) * m];
                            let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                            for j in 0..m {
                                ga[i * m + j] += y[j] * (gy[j] - dot);
                            }
                        }
                    });
                }
                Op::Transpose(a) => {
                    let (n, m) = dims(val);
                    Self::acc(&mut grads, nodes, *a, |ga| {
                        for i in 0..n {
                            for j in 0..m {
                                ga[j * n + i] += g[i * m + j];
                            }
                        }
                    });
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let (n, m) = dims(val);
                    let tg = &nodes[gain.0].value;
                    Self::acc(&mut grads, nodes, *gain, |gg| {
                        for i in 0..n * m {
                            gg[i % m] += g[i] * xhat[i];
                        }
                    });
                    Self::acc(&mut grads, nodes, *bias, |gb| {
                        for i in 0..n * m {
                            gb[i % m] += g[i];
                        }
                    });
                    Self::acc(&mut grads, nodes, *x, |gx| {
                        let mf = m as f64;
                        for i in 0..n {
                            let mut s1 = 0.0;
                            let mut s2 = 0.0;
                            for j in 0..m {
                                let dh = g[i * m + j] * tg.data()[j];
                                s1 += dh;
                                s2 += dh * xhat[i * m + j];
                            }
                            for j in 0..m {
                                let dh = g[i * m + j] * tg.data()[j];
                                gx[i * m + j] += inv_std[i] * (dh - s1 / mf - xhat[i * m + j] * s2 / mf);
                            }
                        }
                    });
                }
                Op::ConcatCols(parts) => {
                    let (n, total) = dims(val);
                    let mut off = 0;
                    for p in parts {
                        let w = nodes[p.0].value.cols();
                        Self::acc(&mut grads, nodes, *p, |gp| {
                            for i in 0..n {
                                for j in 0..w {
                                    gp[i * w + j] += g[i * total + off + j];
                                }
                            }
                        });
                        off += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = nodes[p.0].value.len();
                        Self::acc(&mut grads, nodes, *p, |gp| {
                            gp.iter_mut().zip(&g[off..off + len]).for_each(|(x, y)| *x += y);
                        });
                        off += len;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (n, w) = dims(val);
                    let m = nodes[a.0].value.cols();
                    Self::acc(&mut grads, nodes, *a, |ga| {
                        for i in 0..n {
                            for j in 0..w {
                                ga[i * m + start + j] += g[i * w + j];
                            }
                        }
                    });
                }
                Op::Gather(a, idx) => {
                    let m = val.cols();
                    Self::acc(&mut grads, nodes, *a, |ga| {
                        for (r, &i) in idx.iter().enumerate() {
                            for j in 0..m {
                                ga[i * m + j] += g[r * m + j];
                            }
                        }
                    });
                }
                Op::Reshape(a) => {
                    Self::acc(&mut grads, nodes, *a, |ga| ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                }
                Op::GroupMax(a, arg) => {
                    let m = val.cols();
                    Self::acc(&mut grads, nodes, *a, |ga| {
                        for (o, &r) in arg.iter().enumerate() {
                            ga[r * m + o % m] += g[o];
                        }
                    });
                }
                Op::Combine(a, rows) => {
                    let m = val.cols();
                    Self::acc(&mut grads, nodes, *a, |ga| {
                        for (r, terms) in rows.iter().enumerate() {
                            for &(i, w) in terms {
                                for j in 0..m {
                                    ga[i * m + j] += w * g[r * m + j];
                                }
                            }
                        }
                    });
                }
                Op::Trilinear { grid, coords, taps } => {
                    let tg = &nodes[grid.0].value;
                    let m = tg.cols();
                    Self::acc(&mut grads, nodes, *grid, |gg| {
                        for (p, tap) in taps.iter().enumerate() {
                            for c in 0..8 {
                                let w = tap.weight(c);
                                let r = tap.rows[c];
                                for j in 0..m {
                                    gg[r * m + j] += w * g[p * m + j];
                                }
                            }
                        }
                    });
                    Self::acc(&mut grads, nodes, *coords, |gc| {
                        for (p, tap) in taps.iter().enumerate() {
                            for axis in 0..3 {
                                if tap.dfrac[axis] == 0.0 {
                                    continue;
                                }
                                let mut s = 0.0;
                                for c in 0..8 {
                                    let dw = tap.dweight(c, axis);
                                    let r = tap.rows[c];
                                    for j in 0..m {
                                        s += dw * tg.data()[r * m + j] * g[p * m + j];
                                    }
                                }
                                gc[p * 3 + axis] += s;
                            }
                        }
                    });
                }
                Op::Sum(a) => {
                    let s = g[0];
                    Self::acc(&mut grads, nodes, *a, |ga| ga.iter_mut().for_each(|x| *x += s));
                }
                Op::SmoothL1(a) => {
                    let ta = &nodes[a.0].value;
                    Self::acc(&mut grads, nodes, *a, |ga| {
                        for i in 0..ga.len() {
                            let x = ta.data()[i];
                            let d = if x.abs() < 1.0 { x } else { x.signum() };
                            ga[i] += g[i] * d;
                        }
                    });
                }
                Op::BceLogits(a, targets) => {
                    let ta = &nodes[a.0].value;
                    Self::acc(&mut grads, nodes, *a, |ga| {
                        for i in 0..ga.len() {
                            ga[i] += g[i] * (sigmoid(ta.data()[i]) - targets[i]);
                        }
                    });
                }
            }
        }
        if let Some(bad) = grads.iter().flatten().find(|g| g.iter().any(|v| !v.is_finite())) {
            let _ = bad;
            return Err(Error::NonFinite("backward".into()));
        }
        self.grads = grads;
        Ok(())
    }
}
