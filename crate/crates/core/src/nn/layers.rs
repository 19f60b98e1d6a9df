//! Building blocks composed from tape operations.

use alloc::format;
use alloc::vec::Vec;

use super::{Binding, Graph, Tensor, Var};
use crate::error::{invalid, Error, Result};
use crate::math::{sqrt, Vec3};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `x * W + b` with parameters `name.w`, `name.b`.
pub fn linear(g: &mut Graph, p: &Binding, name: &str, x: Var) -> Result<Var> {
    let w = p.get(&format!("{name}.w"))?;
    let b = p.get(&format!("{name}.b"))?;
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

/// `linear -> relu -> linear` with layers `name.0` and `name.1`.
pub fn mlp2(g: &mut Graph, p: &Binding, name: &str, x: Var) -> Result<Var> {
    let h = linear(g, p, &format!("{name}.0"), x)?;
    let h = g.relu(h)?;
    linear(g, p, &format!("{name}.1"), h)
}

pub fn layer_norm(g: &mut Graph, p: &Binding, name: &str, x: Var) -> Result<Var> {
    let gain = p.get(&format!("{name}.gain"))?;
    let bias = p.get(&format!("{name}.bias"))?;
    g.layer_norm(x, gain, bias, LAYER_NORM_EPS)
}

/// Scaled dot-product attention `softmax(Q K^T / sqrt(d)) V`.
pub fn attention(g: &mut Graph, q: Var, k: Var, v: Var) -> Result<Var> {
    let (tq, tk, tv) = (g.value(q), g.value(k), g.value(v));
    if tq.cols() != tk.cols() || tk.rows() != tv.rows() {
        return Err(Error::Shape(format!(
            "attention: Q {:?}, K {:?}, V {:?}",
            tq.shape(),
            tk.shape(),
            tv.shape()
        )));
    }
    let d = tq.cols().max(1) as f64;
    let kt = g.transpose(k)?;
    let s = g.matmul(q, kt)?;
    let s = g.scale(s, 1.0 / sqrt(d))?;
    let a = g.softmax_rows(s)?;
    g.matmul(a, v)
}

/// The `k` nearest other points of every point (ties to the lower index), flattened row-major.
pub fn knn(coords: &[Vec3], k: usize) -> Result<Vec<usize>> {
    let n = coords.len();
    if k == 0 || k >= n {
        return Err(invalid!("edge convolution needs 1 <= k < points ({n}), got k = {k}"));
    }
    let mut out = Vec::with_capacity(n * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| ((coords[j] - coords[i]).norm_squared(), j)));
        cand.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let head = &mut cand[..k];
        head.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(head.iter().map(|c| c.1));
    }
    Ok(out)
}

/// EdgeConv over coordinate-space neighbours: `max_j relu([f_i, f_j - f_i] W + b)`.
///
/// `features` is `[P x F]`; the layer `name` maps `2F -> F'`.
pub fn edge_conv(g: &mut Graph, p: &Binding, name: &str, features: Var, coords: &[Vec3], k: usize) -> Result<Var> {
    let n = g.value(features).rows();
    if coords.len() != n {
        return Err(Error::Shape(format!(
            "edge_conv: {} coordinates for features {:?}",
            coords.len(),
            g.value(features).shape()
        )));
    }
    let nbr = knn(coords, k)?;
    let centre_idx: Vec<usize> = (0..n).flat_map(|i| core::iter::repeat_n(i, k)).collect();
    let centre = g.gather_rows(features, &centre_idx)?;
    let neighbour = g.gather_rows(features, &nbr)?;
    let diff = g.sub(neighbour, centre)?;
    let edge = g.concat_cols(&[centre, diff])?;
    let h = linear(g, p, name, edge)?;
    let h = g.relu(h)?;
    g.group_max(h, k)
}

/// Zero-padded 1-D convolution along the row (point) axis.
///
/// `x` is `[D x C]`; layer `name.w` is `[width*C x C']`. Width must be odd.
pub fn conv1d(g: &mut Graph, p: &Binding, name: &str, x: Var, width: usize) -> Result<Var> {
    if width % 2 == 0 {
        return Err(invalid!("conv1d width must be odd, got {width}"));
    }
    let (d, c) = (g.value(x).rows(), g.value(x).cols());
    let w = p.get(&format!("{name}.w"))?;
    if g.value(w).rows() != width * c {
        return Err(Error::Shape(format!(
            "conv1d: input {:?} with width {width} vs weight {:?}",
            g.value(x).shape(),
            g.value(w).shape()
        )));
    }
    let cols = if width == 1 {
        x
    } else {
        let zero = g.constant(Tensor::zeros(alloc::vec![1, c]))?;
        let padded = g.concat_rows(&[x, zero])?;
        let half = (width / 2) as isize;
        let idx: Vec<usize> = (0..d as isize)
            .flat_map(|i| {
                (-half..=half).map(move |o| {
                    let j = i + o;
                    if j < 0 || j >= d as isize {
                        d
                    } else {
                        j as usize
                    }
                })
            })
            .collect();
        let taps = g.gather_rows(padded, &idx)?;
        g.reshape(taps, d, width * c)?
    };
    linear(g, p, name, cols)
}
