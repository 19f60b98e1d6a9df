//! Check batteries shared by the unit suites and the acceptance run. Each returns
//! measured errors instead of asserting, so callers pick their own reporting.
#![allow(dead_code)]

use super::oracles::{self, max_abs_diff, random_mat, random_tensor, to_mat, to_tensor, Mat, StageInputs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sot3d_core::math::Vec3;
use sot3d_core::nn::{
    attention, conv1d, edge_conv, grad_check_report, linear, voxel_conv_gather, Graph, ParamStore, Tensor, Var,
    VoxelGrid,
};
use sot3d_core::tracker::{
    ftb_forward, init_params, spt_forward, spt_inputs, stage_forward, tuple_loss, MemoryFrame, MemoryView,
    TrackerConfig, TrainingTuple,
};
use sot3d_core::Box9DoF;

pub const OP_TOL: f64 = 1e-4;
pub const FULL_LOSS_TOL: f64 = 1e-3;
pub const STAGE_TOL: f64 = 1e-12;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn points(r: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<Vec3> {
    (0..n).map(|_| Vec3::from_fn(|_, _| r.random_range(-half..half))).collect()
}

pub fn coords_mat(c: &[Vec3]) -> Mat {
    c.iter().map(|p| vec![p.x, p.y, p.z]).collect()
}

fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Var {
    let shape = g.value(y).shape().to_vec();
    let w = random_tensor(&mut rng(seed), shape[0], shape[1], 1.0);
    let w = g.constant(w).unwrap();
    let prod = g.mul(y, w).unwrap();
    g.sum(prod).unwrap()
}

/// Pushes every entry of `t` at least `gap` away from zero.
fn away_from_zero(mut t: Tensor, gap: f64) -> Tensor {
    for v in t.data_mut() {
        if v.abs() < gap {
            *v = if *v < 0.0 { -gap } else { gap } + *v;
        }
    }
    t
}

type Reports = Vec<(&'static str, f64)>;

fn check(out: &mut Reports, name: &'static str, f: impl Fn(&mut Graph, &[Var]) -> sot3d_core::Result<Var>, inputs: &[Tensor]) {
    let rep = grad_check_report(f, inputs, 1e-6).unwrap();
    out.push((name, rep.max_rel_error));
}

/// Max relative gradient error of every differentiable op and layer, by name.
pub fn op_gradient_errors() -> Reports {
    let mut out = Vec::new();
    elementwise(&mut out);
    // groups of three with distinct entries separated by at least 0.1
    let data: Vec<f64> = (0..12).map(|i| ((i * 7) % 12) as f64 * 0.1).collect();
    let t = Tensor::matrix(6, 2, data).unwrap();
    check(&mut out, "group_max", |g, v| { let y = g.group_max(v[0], 3)?; Ok(weighted_sum(g, y, 19)) }, &[t]);
    layers(&mut out);
    out
}

fn elementwise(out: &mut Reports) {
    let mut r = rng(16);
    let a = random_tensor(&mut r, 3, 4, 1.0);
    let b = random_tensor(&mut r, 3, 4, 1.0);
    let row = random_tensor(&mut r, 1, 4, 1.0);
    let m = random_tensor(&mut r, 4, 2, 1.0);

    check(out, "matmul", |g, v| { let y = g.matmul(v[0], v[1])?; Ok(weighted_sum(g, y, 1)) }, &[a.clone(), m.clone()]);
    check(out, "add", |g, v| { let y = g.add(v[0], v[1])?; Ok(weighted_sum(g, y, 2)) }, &[a.clone(), b.clone()]);
    check(out, "sub", |g, v| { let y = g.sub(v[0], v[1])?; Ok(weighted_sum(g, y, 3)) }, &[a.clone(), b.clone()]);
    check(out, "mul", |g, v| { let y = g.mul(v[0], v[1])?; Ok(weighted_sum(g, y, 4)) }, &[a.clone(), b.clone()]);
    check(out, "add_row", |g, v| { let y = g.add_row(v[0], v[1])?; Ok(weighted_sum(g, y, 5)) }, &[a.clone(), row.clone()]);
    check(out, "scale", |g, v| { let y = g.scale(v[0], -1.7)?; Ok(weighted_sum(g, y, 6)) }, &[a.clone()]);
    check(out, "relu", |g, v| { let y = g.relu(v[0])?; Ok(weighted_sum(g, y, 7)) }, &[away_from_zero(a.clone(), 1e-3)]);
    check(out, "sigmoid", |g, v| { let y = g.sigmoid(v[0])?; Ok(weighted_sum(g, y, 8)) }, &[a.clone()]);
    check(out, "softmax", |g, v| { let y = g.softmax_rows(v[0])?; Ok(weighted_sum(g, y, 9)) }, &[a.clone()]);
    check(out, "transpose", |g, v| { let y = g.transpose(v[0])?; Ok(weighted_sum(g, y, 10)) }, &[a.clone()]);
    check(out, "concat_cols", |g, v| { let y = g.concat_cols(&[v[0], v[1]])?; Ok(weighted_sum(g, y, 11)) }, &[a.clone(), b.clone()]);
    check(out, "concat_rows", |g, v| { let y = g.concat_rows(&[v[0], v[1]])?; Ok(weighted_sum(g, y, 12)) }, &[a.clone(), b.clone()]);
    check(out, "slice_cols", |g, v| { let y = g.slice_cols(v[0], 1, 3)?; Ok(weighted_sum(g, y, 13)) }, &[a.clone()]);
    check(out, "gather_rows", |g, v| { let y = g.gather_rows(v[0], &[2, 0, 2, 1])?; Ok(weighted_sum(g, y, 14)) }, &[a.clone()]);
    check(out, "reshape", |g, v| { let y = g.reshape(v[0], 2, 6)?; Ok(weighted_sum(g, y, 15)) }, &[a.clone()]);
    check(out, "combine_rows", |g, v| {
        let y = g.combine_rows(v[0], vec![vec![(0, 0.5), (2, 0.5)], vec![], vec![(1, 2.0)]])?;
        Ok(weighted_sum(g, y, 16))
    }, &[a.clone()]);
    check(out, "mean", |g, v| { let y = g.mul(v[0], v[0])?; g.mean(y) }, &[a.clone()]);
    check(out, "smooth_l1", |g, v| { let y = g.smooth_l1(v[0])?; Ok(weighted_sum(g, y, 17)) }, &[random_tensor(&mut r, 3, 4, 0.9)]);
    let wide = Tensor::matrix(1, 4, vec![1.5, -2.0, 3.0, -1.2]).unwrap();
    check(out, "smooth_l1 linear branch", |g, v| { let y = g.smooth_l1(v[0])?; Ok(weighted_sum(g, y, 18)) }, &[wide]);
    let targets = [0.0, 1.0, 1.0, 0.0, 0.3, 1.0, 0.0, 0.0, 1.0, 0.5, 0.0, 1.0];
    check(out, "bce", move |g, v| { let y = g.bce_with_logits(v[0], &targets)?; g.sum(y) }, &[random_tensor(&mut r, 3, 4, 3.0)]);
}

fn layers(out: &mut Reports) {
    let mut r = rng(20);
    let x = random_tensor(&mut r, 5, 4, 1.0);
    let gain = random_tensor(&mut r, 1, 4, 1.0);
    let bias = random_tensor(&mut r, 1, 4, 1.0);
    check(out, "layer_norm", |g, v| { let y = g.layer_norm(v[0], v[1], v[2], 1e-5)?; Ok(weighted_sum(g, y, 21)) }, &[x.clone(), gain, bias]);

    let w = random_tensor(&mut r, 4, 3, 1.0);
    let b = random_tensor(&mut r, 1, 3, 1.0);
    let store = ParamStore::new(0);
    check(out, "linear", |g, v| {
        let p = store.bind_values(&["l.w", "l.b"], &v[1..]);
        let y = linear(g, &p, "l", v[0])?;
        Ok(weighted_sum(g, y, 22))
    }, &[x.clone(), w, b]);

    let (q, k, vv) = (random_tensor(&mut r, 3, 4, 1.0), random_tensor(&mut r, 5, 4, 1.0), random_tensor(&mut r, 5, 2, 1.0));
    check(out, "attention", |g, v| { let y = attention(g, v[0], v[1], v[2])?; Ok(weighted_sum(g, y, 23)) }, &[q, k, vv]);

    let coords = points(&mut r, 7, 1.0);
    let f = random_tensor(&mut r, 7, 3, 1.0);
    let w = random_tensor(&mut r, 6, 4, 1.0);
    let b = random_tensor(&mut r, 1, 4, 1.0);
    check(out, "edge_conv", |g, v| {
        let p = store.bind_values(&["e.w", "e.b"], &v[1..]);
        let y = edge_conv(g, &p, "e", v[0], &coords, 3)?;
        Ok(weighted_sum(g, y, 24))
    }, &[f, w, b]);

    let s = random_tensor(&mut r, 6, 1, 1.0);
    let w = random_tensor(&mut r, 3, 4, 1.0);
    let b = random_tensor(&mut r, 1, 4, 1.0);
    check(out, "conv1d", |g, v| {
        let p = store.bind_values(&["c.w", "c.b"], &v[1..]);
        let y = conv1d(g, &p, "c", v[0], 3)?;
        Ok(weighted_sum(g, y, 25))
    }, &[s, w, b]);

    let grid = VoxelGrid::new(3, Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap();
    // keep points off voxel-centre planes, where the interpolation weights have kinks
    let pts: Vec<Vec3> = (0..6).map(|i| Vec3::new(-0.9 + 0.31 * i as f64, 0.45 - 0.17 * i as f64, 0.12 * i as f64 - 0.4)).collect();
    let ct = to_tensor(&coords_mat(&pts));
    let f = random_tensor(&mut r, 6, 2, 1.0);
    let w = random_tensor(&mut r, 54, 3, 0.5);
    let b = random_tensor(&mut r, 1, 3, 0.5);
    check(out, "voxel_conv_gather", |g, v| {
        let p = store.bind_values(&["v.w", "v.b"], &v[2..]);
        let at = g.value(v[1]);
        let moved: Vec<Vec3> = (0..at.rows()).map(|i| Vec3::from_row_slice(at.row(i))).collect();
        let y = voxel_conv_gather(g, &p, "v", v[0], v[1], &moved, &grid)?;
        Ok(weighted_sum(g, y, 26))
    }, &[f, ct, w, b]);
}

/// Two stages, three memory frames, two transformer layers, 16 search points.
pub fn micro_config() -> TrackerConfig {
    TrackerConfig {
        search_points: 16,
        sampled_points: 8,
        feature_width: 8,
        knn: 3,
        voxel_grid: 4,
        ..TrackerConfig::default()
    }
}

pub struct Micro {
    pub cfg: TrackerConfig,
    pub params: ParamStore,
    pub x: Mat,
    pub coords: Vec<Vec3>,
    pub mem_features: Mat,
    pub mem_coords: Vec<Vec3>,
    pub mem_mask: Vec<f64>,
    pub grid: VoxelGrid,
}

pub fn micro(seed: u64) -> Micro {
    let cfg = micro_config();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let m = cfg.memory_size * cfg.search_points;
    Micro {
        params: init_params(&cfg, seed).unwrap(),
        x: random_mat(&mut r, cfg.search_points, cfg.feature_width, 1.0),
        coords: points(&mut r, cfg.search_points, 0.8),
        mem_features: random_mat(&mut r, m, cfg.feature_width, 1.0),
        mem_coords: points(&mut r, m, 0.8),
        mem_mask: (0..m).map(|i| f64::from(u8::from(i % 3 == 0))).collect(),
        grid: VoxelGrid::new(cfg.voxel_grid, Vec3::repeat(-1.5), Vec3::repeat(1.5)).unwrap(),
        cfg,
    }
}

impl Micro {
    /// Builds a graph holding the search features, coordinates and memory.
    pub fn graph(&self) -> (Graph, sot3d_core::nn::Binding, Var, Var, MemoryView) {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g).unwrap();
        let x = g.input(to_tensor(&self.x)).unwrap();
        let cv = g.constant(to_tensor(&coords_mat(&self.coords))).unwrap();
        let mem = MemoryView {
            features: g.input(to_tensor(&self.mem_features)).unwrap(),
            coords: self.mem_coords.clone(),
            mask: self.mem_mask.clone(),
        };
        (g, p, x, cv, mem)
    }
}

pub fn reference(m: &Micro) -> oracles::StageTrace {
    oracles::stage(
        &m.params,
        0,
        &StageInputs {
            x: &m.x,
            coords: &m.coords,
            mem_features: &m.mem_features,
            mem_coords: &m.mem_coords,
            mem_mask: &m.mem_mask,
            layers: m.cfg.spt_layers,
            sampled_points: m.cfg.sampled_points,
            knn: m.cfg.knn,
            score_width: m.cfg.score_conv_width,
            grid_size: m.cfg.voxel_grid,
            grid_min: m.grid.min,
            grid_max: m.grid.max,
        },
    )
}

fn row(t: &Tensor) -> Mat {
    vec![t.data().to_vec()]
}

/// Max abs difference between `stage_forward` and the straight-line reference, per
/// intermediate. Sampled indices are reported as 0 when equal and infinity otherwise.
pub fn stage_oracle_diffs(seed: u64) -> Reports {
    let m = micro(seed);
    let want = reference(&m);
    let (mut g, p, x, cv, mem) = m.graph();
    let mut out = Vec::new();

    let inputs = spt_inputs(&mut g, &p, "stage0.spt", cv, &mem).unwrap();
    out.push(("pos_x", max_abs_diff(&to_mat(g.value(inputs.pos_x)), &want.pos_x)));
    out.push(("mem_keys", max_abs_diff(&to_mat(g.value(inputs.mem_keys)), &want.mem_keys)));
    out.push(("mem_values", max_abs_diff(&to_mat(g.value(inputs.mem_values)), &want.mem_values)));
    let spt = spt_forward(&mut g, &p, "stage0.spt", m.cfg.spt_layers, x, cv, &mem).unwrap();
    out.push(("spt", max_abs_diff(&to_mat(g.value(spt)), &want.spt)));

    let st = stage_forward(&mut g, &p, &m.cfg, 0, x, cv, &m.coords, &mem, &m.grid).unwrap();
    out.push(("votes", max_abs_diff(&to_mat(g.value(st.votes)), &want.votes)));
    out.push(("mask_logits", max_abs_diff(&row(g.value(st.mask_logits)), &vec![want.mask_logits.clone()])));
    out.push(("score_logits", max_abs_diff(&row(g.value(st.score_logits)), &vec![want.score_logits.clone()])));
    out.push(("sampled", if st.sampled == want.sampled { 0.0 } else { f64::INFINITY }));

    let mask_prob = g.sigmoid(st.mask_logits).unwrap();
    let sampled_mask = g.gather_rows(mask_prob, &st.sampled).unwrap();
    let ftb = ftb_forward(&mut g, &p, "stage0.ftb", &m.cfg, st.sampled_votes, &st.sampled_vote_values, sampled_mask, &m.grid)
        .unwrap();
    out.push(("ftb", max_abs_diff(&to_mat(g.value(ftb)), &want.ftb)));
    out.push(("next", max_abs_diff(&to_mat(g.value(st.next)), &want.next)));
    out
}

/// Search crop plus three memory frames of 16 points each around a unit box.
pub fn micro_tuple(seed: u64) -> TrainingTuple {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let gt = Box9DoF::new(Vec3::new(0.1, -0.05, 0.0), Vec3::new(0.8, 0.6, 0.5), Vec3::new(0.3, 0.05, -0.04)).unwrap();
    let reference = gt.with_center(Vec3::zeros()).unwrap();
    let memory = (0..3)
        .map(|i| {
            let c = Vec3::new(-0.1 * i as f64, 0.05 * i as f64, 0.0);
            let mgt = gt.with_center(c).unwrap();
            MemoryFrame { points: points(&mut r, 16, 0.9).iter().map(|p| p + c).collect(), crop_center: c, gt: mgt }
        })
        .collect();
    TrainingTuple { memory, search: points(&mut r, 16, 0.9), reference, gt }
}

/// Max relative error of the whole training loss gradient over every parameter, and
/// the parameter where it occurs.
pub fn full_loss_gradient_error() -> (f64, String) {
    let cfg = micro_config();
    // An instance whose ReLU, max-pool, kNN and FPS decisions do not switch within the
    // finite-difference step; most random instances have such a switch somewhere.
    let params = init_params(&cfg, 102).unwrap();
    let tuple = micro_tuple(202);
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    let tensors: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let f = |g: &mut Graph, v: &[Var]| {
        let p = params.bind_values(&refs, v);
        tuple_loss(g, &p, &cfg, &tuple).map(|(loss, _)| loss)
    };
    // many entries are below 1e-8, where a smaller step is swamped by rounding
    let rep = grad_check_report(f, &tensors, 1e-4).unwrap();
    (rep.max_rel_error, names[rep.input].clone())
}
