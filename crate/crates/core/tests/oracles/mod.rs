//! Slow, independent reference implementations used by the test suites.
//!
//! Everything here works on plain nested vectors and loops so that it shares no code
//! with the library beyond the public value types.

#![allow(dead_code)]

use std::f64::consts::PI;

use rand::Rng;
use sot3d_core::geom::{iou3d, Box9DoF, SymmetrySpec};
use sot3d_core::math::Vec3;
use sot3d_core::nn::{ParamStore, Tensor};

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn to_tensor(m: &Mat) -> Tensor {
    let rows: Vec<&[f64]> = m.iter().map(|r| r.as_slice()).collect();
    Tensor::from_rows(&rows).unwrap()
}

pub fn random_mat<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Mat {
    (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-scale..scale)).collect()).collect()
}

pub fn random_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Tensor {
    to_tensor(&random_mat(rng, rows, cols, scale))
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len(), "row count");
    let mut worst = 0.0f64;
    for (ra, rb) in a.iter().zip(b) {
        assert_eq!(ra.len(), rb.len(), "column count");
        for (x, y) in ra.iter().zip(rb) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

fn param(p: &ParamStore, name: &str) -> Mat {
    to_mat(p.get(name).unwrap_or_else(|| panic!("missing parameter {name}")))
}

/// `x W + b` with `name.w`, `name.b` read from the store.
pub fn dense(p: &ParamStore, name: &str, x: &Mat) -> Mat {
    let w = param(p, &format!("{name}.w"));
    let b = param(p, &format!("{name}.b"));
    x.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| {
                    let mut s = 0.0;
                    for (i, xi) in row.iter().enumerate() {
                        s += xi * w[i][j];
                    }
                    s + b[0][j]
                })
                .collect()
        })
        .collect()
}

pub fn relu(x: &Mat) -> Mat {
    x.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect()).collect()
}

pub fn two_layer(p: &ParamStore, name: &str, x: &Mat) -> Mat {
    dense(p, &format!("{name}.1"), &relu(&dense(p, &format!("{name}.0"), x)))
}

pub fn layer_norm(p: &ParamStore, name: &str, x: &Mat) -> Mat {
    let g = param(p, &format!("{name}.gain"));
    let b = param(p, &format!("{name}.bias"));
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = (var + 1e-5).sqrt();
            row.iter().enumerate().map(|(j, v)| (v - mean) / sd * g[0][j] + b[0][j]).collect()
        })
        .collect()
}

/// Three nested loops: scores, softmax, weighted sum.
pub fn attention(q: &Mat, k: &Mat, v: &Mat) -> Mat {
    let d = q[0].len() as f64;
    let mut out = Vec::new();
    for qi in q {
        let mut scores = Vec::new();
        for kj in k {
            let mut s = 0.0;
            for c in 0..qi.len() {
                s += qi[c] * kj[c];
            }
            scores.push(s / d.sqrt());
        }
        let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        let mut row = vec![0.0; v[0].len()];
        for (j, vj) in v.iter().enumerate() {
            for c in 0..row.len() {
                row[c] += e[j] / z * vj[c];
            }
        }
        out.push(row);
    }
    out
}

/// Nearest `k` other points by sorting every candidate (ties to the lower index).
pub fn knn(coords: &[Vec3], k: usize) -> Vec<Vec<usize>> {
    (0..coords.len())
        .map(|i| {
            let mut c: Vec<(f64, usize)> = (0..coords.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let d = coords[j] - coords[i];
                    (d.x * d.x + d.y * d.y + d.z * d.z, j)
                })
                .collect();
            c.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            c[..k].iter().map(|e| e.1).collect()
        })
        .collect()
}

/// Per-point loop: `max_j relu([f_i, f_j - f_i] W + b)`.
pub fn edge_conv(p: &ParamStore, name: &str, f: &Mat, coords: &[Vec3], k: usize) -> Mat {
    let nb = knn(coords, k);
    f.iter()
        .enumerate()
        .map(|(i, fi)| {
            let edges: Mat = nb[i]
                .iter()
                .map(|&j| fi.iter().cloned().chain(f[j].iter().zip(fi).map(|(a, b)| a - b)).collect())
                .collect();
            let h = relu(&dense(p, name, &edges));
            (0..h[0].len()).map(|c| h.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max)).collect()
        })
        .collect()
}

/// Sliding window with zero padding; window rows stacked in offset order.
pub fn conv1d(p: &ParamStore, name: &str, x: &Mat, width: usize) -> Mat {
    let half = (width / 2) as isize;
    let c = x[0].len();
    let windows: Mat = (0..x.len() as isize)
        .map(|i| {
            let mut w = Vec::with_capacity(width * c);
            for o in -half..=half {
                let j = i + o;
                if j < 0 || j >= x.len() as isize {
                    w.extend(std::iter::repeat_n(0.0, c));
                } else {
                    w.extend_from_slice(&x[j as usize]);
                }
            }
            w
        })
        .collect();
    dense(p, name, &windows)
}

/// Dense mean-pool, dense zero-padded 3x3x3 convolution over the full grid, then trilinear
/// interpolation between voxel centres with the coordinate clamped to the outer centres.
pub fn voxel_conv_gather(
    p: &ParamStore,
    name: &str,
    f: &Mat,
    coords: &[Vec3],
    size: usize,
    min: Vec3,
    max: Vec3,
) -> Mat {
    let c = f[0].len();
    let cell = (max - min) / size as f64;
    let s = size;
    let idx = |x: usize, y: usize, z: usize| (x * s + y) * s + z;
    let mut sum = vec![vec![0.0; c]; s * s * s];
    let mut cnt = vec![0usize; s * s * s];
    for (pt, fi) in coords.iter().zip(f) {
        let v: Vec<usize> = (0..3)
            .map(|a| (((pt[a] - min[a]) / cell[a]).floor().max(0.0) as usize).min(s - 1))
            .collect();
        let flat = idx(v[0], v[1], v[2]);
        cnt[flat] += 1;
        for j in 0..c {
            sum[flat][j] += fi[j];
        }
    }
    let pooled: Mat = sum
        .iter()
        .zip(&cnt)
        .map(|(r, &n)| if n == 0 { vec![0.0; c] } else { r.iter().map(|v| v / n as f64).collect() })
        .collect();
    let mut windows = Vec::with_capacity(s * s * s);
    for x in 0..s as isize {
        for y in 0..s as isize {
            for z in 0..s as isize {
                let mut w = Vec::with_capacity(27 * c);
                for dx in -1..=1isize {
                    for dy in -1..=1isize {
                        for dz in -1..=1isize {
                            let (a, b, e) = (x + dx, y + dy, z + dz);
                            let inside = (0..s as isize).contains(&a) && (0..s as isize).contains(&b) && (0..s as isize).contains(&e);
                            if inside {
                                w.extend_from_slice(&pooled[idx(a as usize, b as usize, e as usize)]);
                            } else {
                                w.extend(std::iter::repeat_n(0.0, c));
                            }
                        }
                    }
                }
                windows.push(w);
            }
        }
    }
    let conv = dense(p, name, &windows);
    let out_c = conv[0].len();
    coords
        .iter()
        .map(|pt| {
            let mut base = [0usize; 3];
            let mut t = [0.0f64; 3];
            for a in 0..3 {
                let u = ((pt[a] - min[a]) / cell[a] - 0.5).clamp(0.0, (s - 1) as f64);
                base[a] = (u.floor() as usize).min(s - 2);
                t[a] = u - base[a] as f64;
            }
            let mut row = vec![0.0; out_c];
            for corner in 0..8 {
                let bit = |a: usize| (corner >> a) & 1;
                let w: f64 = (0..3).map(|a| if bit(a) == 1 { t[a] } else { 1.0 - t[a] }).product();
                let src = &conv[idx(base[0] + bit(0), base[1] + bit(1), base[2] + bit(2))];
                for j in 0..out_c {
                    row[j] += w * src[j];
                }
            }
            row
        })
        .collect()
}

/// Quadratic-time-per-step FPS: every step recomputes each candidate's distance to the
/// whole selected set.
pub fn fps(points: &[Vec3], m: usize, start: usize) -> Vec<usize> {
    let mut chosen = vec![start];
    while chosen.len() < m {
        let mut best = None;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..points.len() {
            if chosen.contains(&i) {
                continue;
            }
            let d = chosen.iter().map(|&j| (points[i] - points[j]).norm_squared()).fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = Some(i);
            }
        }
        chosen.push(best.unwrap());
    }
    chosen
}

/// `Rz(a) Ry(b) Rx(g)` multiplied out by hand.
pub fn rotation(angles: [f64; 3]) -> [[f64; 3]; 3] {
    let [a, b, g] = angles;
    let rz = [[a.cos(), -a.sin(), 0.0], [a.sin(), a.cos(), 0.0], [0.0, 0.0, 1.0]];
    let ry = [[b.cos(), 0.0, b.sin()], [0.0, 1.0, 0.0], [-b.sin(), 0.0, b.cos()]];
    let rx = [[1.0, 0.0, 0.0], [0.0, g.cos(), -g.sin()], [0.0, g.sin(), g.cos()]];
    mat3_mul(&mat3_mul(&rz, &ry), &rx)
}

pub fn mat3_mul(p: &[[f64; 3]; 3], q: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                o[i][j] += p[i][k] * q[k][j];
            }
        }
    }
    o
}

/// Containment via the six face half-spaces: `|n_a . (p - c)| <= h_a` for each box axis.
pub fn inside(b: &Box9DoF, p: &Vec3) -> bool {
    let r = rotation([b.angles().x, b.angles().y, b.angles().z]);
    let d = [p.x - b.center().x, p.y - b.center().y, p.z - b.center().z];
    (0..3).all(|axis| {
        let along: f64 = (0..3).map(|row| r[row][axis] * d[row]).sum();
        along.abs() <= 0.5 * b.size()[axis]
    })
}

/// Monte-Carlo IoU: uniform samples in the joint bounding region.
pub fn monte_carlo_iou<R: Rng>(a: &Box9DoF, b: &Box9DoF, samples: usize, rng: &mut R) -> f64 {
    let ea = a.aabb_half_extent();
    let eb = b.aabb_half_extent();
    let lo = (a.center() - ea).inf(&(b.center() - eb));
    let hi = (a.center() + ea).sup(&(b.center() + eb));
    let (mut inter, mut union) = (0usize, 0usize);
    for _ in 0..samples {
        let p = Vec3::from_fn(|i, _| rng.random_range(lo[i]..hi[i]));
        let (ia, ib) = (inside(a, &p), inside(b, &p));
        if ia && ib {
            inter += 1;
        }
        if ia || ib {
            union += 1;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// A box near the origin with extents in `[0.5, 2.5]` and arbitrary orientation.
pub fn random_box<R: Rng>(rng: &mut R, spread: f64) -> Box9DoF {
    let c = Vec3::from_fn(|_, _| rng.random_range(-spread..=spread));
    let s = Vec3::from_fn(|_, _| rng.random_range(0.5..2.5));
    let a = Vec3::new(rng.random_range(-PI..PI), rng.random_range(-1.5..1.5), rng.random_range(-PI..PI));
    Box9DoF::new(c, s, a).unwrap()
}

/// Explicit loop over the `k` spins.
pub fn symmetric_iou(pred: &Box9DoF, gt: &Box9DoF, sym: &SymmetrySpec) -> f64 {
    if !sym.symmetric {
        return iou3d(pred, gt);
    }
    let mut best = 0.0f64;
    for j in 0..sym.k {
        let spun = pred.rotate_local(sym.axis, 2.0 * PI * j as f64 / sym.k as f64).unwrap();
        best = best.max(iou3d(&spun, gt));
    }
    best
}

/// What a straight-line evaluation of one cascade stage produces.
pub struct StageTrace {
    pub pos_x: Mat,
    pub mem_keys: Mat,
    pub mem_values: Mat,
    pub spt: Mat,
    pub votes: Mat,
    pub mask_logits: Vec<f64>,
    pub score_logits: Vec<f64>,
    pub sampled: Vec<usize>,
    pub ftb: Mat,
    pub next: Mat,
}

pub struct StageInputs<'a> {
    pub x: &'a Mat,
    pub coords: &'a [Vec3],
    pub mem_features: &'a Mat,
    pub mem_coords: &'a [Vec3],
    pub mem_mask: &'a [f64],
    pub layers: usize,
    pub sampled_points: usize,
    pub knn: usize,
    pub score_width: usize,
    pub grid_size: usize,
    pub grid_min: Vec3,
    pub grid_max: Vec3,
}

fn points_mat(c: &[Vec3]) -> Mat {
    c.iter().map(|p| vec![p.x, p.y, p.z]).collect()
}

/// One stage written out end to end.
pub fn stage(p: &ParamStore, stage: usize, inp: &StageInputs) -> StageTrace {
    let st = format!("stage{stage}");
    let spt = format!("{st}.spt");
    let pos_x = two_layer(p, &format!("{spt}.pos"), &points_mat(inp.coords));
    let pos_m = two_layer(p, &format!("{spt}.pos"), &points_mat(inp.mem_coords));
    let mask_col: Mat = inp.mem_mask.iter().map(|&m| vec![m]).collect();
    let mem_values = add(inp.mem_features, &dense(p, &format!("{spt}.mask"), &mask_col));
    let mem_keys = add(&mem_values, &pos_m);

    let mut x = inp.x.clone();
    for l in 0..inp.layers {
        let ly = format!("{spt}.layer{l}");
        let q = dense(p, &format!("{ly}.cross.q"), &add(&x, &pos_x));
        let k = dense(p, &format!("{ly}.cross.k"), &mem_keys);
        let v = dense(p, &format!("{ly}.cross.v"), &mem_values);
        let o = dense(p, &format!("{ly}.cross.o"), &attention(&q, &k, &v));
        x = layer_norm(p, &format!("{ly}.ln1"), &add(&x, &o));
        let xs = add(&x, &pos_x);
        let q = dense(p, &format!("{ly}.self.q"), &xs);
        let k = dense(p, &format!("{ly}.self.k"), &xs);
        let v = dense(p, &format!("{ly}.self.v"), &x);
        let o = dense(p, &format!("{ly}.self.o"), &attention(&q, &k, &v));
        x = layer_norm(p, &format!("{ly}.ln2"), &add(&x, &o));
        let f = two_layer(p, &format!("{ly}.ffn"), &x);
        x = layer_norm(p, &format!("{ly}.ln3"), &add(&x, &f));
    }

    let head = two_layer(p, &format!("{st}.head"), &x);
    let votes: Mat = head
        .iter()
        .zip(inp.coords)
        .map(|(r, c)| vec![c.x + r[0], c.y + r[1], c.z + r[2]])
        .collect();
    let mask_logits: Vec<f64> = head.iter().map(|r| r[3]).collect();
    let score_logits: Vec<f64> = head.iter().map(|r| r[4]).collect();
    let vote_pts: Vec<Vec3> = votes.iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect();
    let sampled = fps(&vote_pts, inp.sampled_points, 0);

    let sv: Vec<Vec3> = sampled.iter().map(|&i| vote_pts[i]).collect();
    let h0: Mat = sampled
        .iter()
        .map(|&i| {
            let m = 1.0 / (1.0 + (-mask_logits[i]).exp());
            vec![votes[i][0], votes[i][1], votes[i][2], m]
        })
        .collect();
    let h = two_layer(p, &format!("{st}.ftb.mlp"), &h0);
    let h = edge_conv(p, &format!("{st}.ftb.ec"), &h, &sv, inp.knn);
    let conv = voxel_conv_gather(p, &format!("{st}.ftb.conv3d"), &h, &sv, inp.grid_size, inp.grid_min, inp.grid_max);
    let ftb = add(&h, &conv);
    let scores: Mat = sampled.iter().map(|&i| vec![score_logits[i]]).collect();
    let emb = conv1d(p, &format!("{st}.score_conv"), &scores, inp.score_width);
    let next = add(&ftb, &emb);
    StageTrace {
        pos_x,
        mem_keys,
        mem_values,
        spt: x,
        votes,
        mask_logits,
        score_logits,
        sampled,
        ftb,
        next,
    }
}
