//! Forward pass of the progressive tracker.
//!
//! All coordinates handed to the network are relative to the center of the box the
//! search region was cropped around (world axes, translated only).

use alloc::format;
use alloc::vec::Vec;

use super::config::{BoxDof, TrackerConfig};
use crate::error::{invalid, Error, Result};
use crate::geom::{farthest_point_sampling, Box9DoF};
use crate::math::{sigmoid, Vec3};
use crate::nn::{
    attention, conv1d, edge_conv, layer_norm, linear, mlp2, voxel_conv_gather, Binding, Graph, Initializer, ParamStore,
    Tensor, Var, VoxelGrid,
};

/// Smallest decoded box extent, meters.
pub const MIN_SIZE: f64 = 0.01;

/// Columns of a stage localization head: 3 offsets, mask logit, score logit.
const STAGE_HEAD: usize = 5;

pub fn coords_tensor(points: &[Vec3]) -> Tensor {
    let data = points.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
    Tensor::matrix(points.len(), 3, data).expect("3 values per point")
}

pub fn rows_to_points(t: &Tensor) -> Vec<Vec3> {
    (0..t.rows()).map(|r| Vec3::from_row_slice(&t.row(r)[..3])).collect()
}

/// Creates every parameter of the model for `cfg`, deterministically in `seed`.
pub fn init_params(cfg: &TrackerConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let f = cfg.feature_width;
    let mut store = ParamStore::new(seed);
    let mut init = Initializer::new(seed);
    init.linear(&mut store, "backbone.ec0", 6, f)?;
    init.linear(&mut store, "backbone.ec1", 2 * f, f)?;
    for s in 0..cfg.stages {
        let st = format!("stage{s}");
        let spt = format!("{st}.spt");
        init.linear(&mut store, &format!("{spt}.pos.0"), 3, f)?;
        init.linear(&mut store, &format!("{spt}.pos.1"), f, f)?;
        init.linear(&mut store, &format!("{spt}.mask"), 1, f)?;
        for l in 0..cfg.spt_layers {
            let ly = format!("{spt}.layer{l}");
            for block in ["cross", "self"] {
                for proj in ["q", "k", "v", "o"] {
                    init.linear(&mut store, &format!("{ly}.{block}.{proj}"), f, f)?;
                }
            }
            for ln in ["ln1", "ln2", "ln3"] {
                init.layer_norm(&mut store, &format!("{ly}.{ln}"), f)?;
            }
            init.linear(&mut store, &format!("{ly}.ffn.0"), f, 2 * f)?;
            init.linear(&mut store, &format!("{ly}.ffn.1"), 2 * f, f)?;
        }
        init.linear(&mut store, &format!("{st}.head.0"), f, f)?;
        init.linear(&mut store, &format!("{st}.head.1"), f, STAGE_HEAD)?;
        init.linear(&mut store, &format!("{st}.ftb.mlp.0"), 4, f)?;
        init.linear(&mut store, &format!("{st}.ftb.mlp.1"), f, f)?;
        init.linear(&mut store, &format!("{st}.ftb.ec"), 2 * f, f)?;
        init.linear(&mut store, &format!("{st}.ftb.conv3d"), 27 * f, f)?;
        init.linear(&mut store, &format!("{st}.score_conv"), cfg.score_conv_width, f)?;
    }
    init.linear(&mut store, "head.0", f, f)?;
    // zero output layer: every box starts as the previous box, and offset columns whose
    // targets never move receive no gradient at all
    init.zero_linear(&mut store, "head.1", f, cfg.head_outputs())?;
    Ok(store)
}

/// Indices that resample `points` to exactly `p` entries: the FPS ordering, cycled when short.
pub fn resample_indices(points: &[Vec3], p: usize) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let n = points.len();
    let order = farthest_point_sampling(points, p.min(n), 0)?;
    Ok((0..p).map(|i| order[i % order.len()]).collect())
}

/// Resampled coordinates and their backbone features.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub coords: Vec<Vec3>,
    pub features: Var,
}

/// Shared point backbone: resample to P points, then two EdgeConv layers.
pub fn backbone(g: &mut Graph, p: &Binding, cfg: &TrackerConfig, points: &[Vec3]) -> Result<Encoded> {
    let idx = resample_indices(points, cfg.search_points)?;
    let coords: Vec<Vec3> = idx.iter().map(|&i| points[i]).collect();
    let x = g.constant(coords_tensor(&coords))?;
    let h = edge_conv(g, p, "backbone.ec0", x, &coords, cfg.knn)?;
    let features = edge_conv(g, p, "backbone.ec1", h, &coords, cfg.knn)?;
    Ok(Encoded { coords, features })
}

/// Memory as seen from the current search region.
#[derive(Debug, Clone)]
pub struct MemoryView {
    /// `[M x F]`.
    pub features: Var,
    /// Relative to the current crop center.
    pub coords: Vec<Vec3>,
    /// Targetness in `{0, 1}` per memory point.
    pub mask: Vec<f64>,
}

/// Per-call embeddings shared by every SPT layer.
#[derive(Debug, Clone, Copy)]
pub struct SptInputs {
    pub pos_x: Var,
    pub mem_keys: Var,
    pub mem_values: Var,
}

/// `x_coords` is the `[P_i x 3]` coordinate variable of the search rows; later stages
/// pass their votes so the positional embedding carries gradient back to them.
pub fn spt_inputs(g: &mut Graph, p: &Binding, name: &str, x_coords: Var, mem: &MemoryView) -> Result<SptInputs> {
    let m = g.value(mem.features).rows();
    if m == 0 || mem.coords.len() != m || mem.mask.len() != m {
        return Err(Error::Shape(format!(
            "memory with {m} feature rows, {} coordinates and {} mask values",
            mem.coords.len(),
            mem.mask.len()
        )));
    }
    let pos_x = mlp2(g, p, &format!("{name}.pos"), x_coords)?;
    let cm = g.constant(coords_tensor(&mem.coords))?;
    let pos_m = mlp2(g, p, &format!("{name}.pos"), cm)?;
    let mask = g.constant(Tensor::matrix(m, 1, mem.mask.clone())?)?;
    let mask_emb = linear(g, p, &format!("{name}.mask"), mask)?;
    let mem_values = g.add(mem.features, mask_emb)?;
    let mem_keys = g.add(mem_values, pos_m)?;
    Ok(SptInputs { pos_x, mem_keys, mem_values })
}

/// One SPT layer: cross-attention to memory, self-attention, feed-forward; post-norm residuals.
pub fn spt_layer(g: &mut Graph, p: &Binding, name: &str, x: Var, inputs: &SptInputs) -> Result<Var> {
    let xq = g.add(x, inputs.pos_x)?;
    let q = linear(g, p, &format!("{name}.cross.q"), xq)?;
    let k = linear(g, p, &format!("{name}.cross.k"), inputs.mem_keys)?;
    let v = linear(g, p, &format!("{name}.cross.v"), inputs.mem_values)?;
    let a = attention(g, q, k, v)?;
    let o = linear(g, p, &format!("{name}.cross.o"), a)?;
    let x = g.add(x, o)?;
    let x = layer_norm(g, p, &format!("{name}.ln1"), x)?;

    let xs = g.add(x, inputs.pos_x)?;
    let q = linear(g, p, &format!("{name}.self.q"), xs)?;
    let k = linear(g, p, &format!("{name}.self.k"), xs)?;
    let v = linear(g, p, &format!("{name}.self.v"), x)?;
    let a = attention(g, q, k, v)?;
    let o = linear(g, p, &format!("{name}.self.o"), a)?;
    let x = g.add(x, o)?;
    let x = layer_norm(g, p, &format!("{name}.ln2"), x)?;

    let f = mlp2(g, p, &format!("{name}.ffn"), x)?;
    let x = g.add(x, f)?;
    layer_norm(g, p, &format!("{name}.ln3"), x)
}

/// Spatial-temporal transformer of the stage parameter prefix `name`.
pub fn spt_forward(
    g: &mut Graph,
    p: &Binding,
    name: &str,
    layers: usize,
    x: Var,
    x_coords: Var,
    mem: &MemoryView,
) -> Result<Var> {
    let c = g.value(x_coords).shape();
    if c != [g.value(x).rows(), 3] || g.value(x).cols() != g.value(mem.features).cols() {
        return Err(Error::Shape(format!(
            "spt: search features {:?} with coordinates {:?} vs memory {:?}",
            g.value(x).shape(),
            c,
            g.value(mem.features).shape()
        )));
    }
    let inputs = spt_inputs(g, p, name, x_coords, mem)?;
    let mut x = x;
    for l in 0..layers {
        x = spt_layer(g, p, &format!("{name}.layer{l}"), x, &inputs)?;
    }
    Ok(x)
}

/// Feature transformation block over sampled votes and their mask probabilities.
pub fn ftb_forward(
    g: &mut Graph,
    p: &Binding,
    name: &str,
    cfg: &TrackerConfig,
    votes: Var,
    vote_values: &[Vec3],
    mask: Var,
    region: &VoxelGrid,
) -> Result<Var> {
    let h = g.concat_cols(&[votes, mask])?;
    let h = mlp2(g, p, &format!("{name}.mlp"), h)?;
    let h = edge_conv(g, p, &format!("{name}.ec"), h, vote_values, cfg.knn)?;
    let conv = voxel_conv_gather(g, p, &format!("{name}.conv3d"), h, votes, vote_values, region)?;
    g.add(h, conv)
}

#[derive(Debug, Clone)]
pub struct StageOutput {
    /// Coordinates the stage consumed.
    pub input_coords: Vec<Vec3>,
    /// Center votes `[P_i x 3]`.
    pub votes: Var,
    pub vote_values: Vec<Vec3>,
    pub mask_logits: Var,
    pub score_logits: Var,
    /// Rows of the stage input chosen by FPS over the votes.
    pub sampled: Vec<usize>,
    pub sampled_votes: Var,
    pub sampled_vote_values: Vec<Vec3>,
    /// Refined features `[D x F]` for the next stage.
    pub next: Var,
}

/// One cascade stage: SPT, localization head, FPS over votes, FTB and score embedding.
pub fn stage_forward(
    g: &mut Graph,
    p: &Binding,
    cfg: &TrackerConfig,
    stage: usize,
    x: Var,
    coords_var: Var,
    coords: &[Vec3],
    mem: &MemoryView,
    region: &VoxelGrid,
) -> Result<StageOutput> {
    let st = format!("stage{stage}");
    let feat = spt_forward(g, p, &format!("{st}.spt"), cfg.spt_layers, x, coords_var, mem)?;
    let r = mlp2(g, p, &format!("{st}.head"), feat)?;
    let offsets = g.slice_cols(r, 0, 3)?;
    let mask_logits = g.slice_cols(r, 3, 4)?;
    let score_logits = g.slice_cols(r, 4, 5)?;
    let votes = g.add(coords_var, offsets)?;
    let vote_values = rows_to_points(g.value(votes));

    let sampled = farthest_point_sampling(&vote_values, cfg.sampled_points, 0)?;
    let sampled_votes = g.gather_rows(votes, &sampled)?;
    let sampled_vote_values: Vec<Vec3> = sampled.iter().map(|&i| vote_values[i]).collect();
    let mask_prob = g.sigmoid(mask_logits)?;
    let sampled_mask = g.gather_rows(mask_prob, &sampled)?;
    let sampled_scores = g.gather_rows(score_logits, &sampled)?;

    let ftb = ftb_forward(g, p, &format!("{st}.ftb"), cfg, sampled_votes, &sampled_vote_values, sampled_mask, region)?;
    let emb = conv1d(g, p, &format!("{st}.score_conv"), sampled_scores, cfg.score_conv_width)?;
    let next = g.add(ftb, emb)?;
    Ok(StageOutput {
        input_coords: coords.to_vec(),
        votes,
        vote_values,
        mask_logits,
        score_logits,
        sampled,
        sampled_votes,
        sampled_vote_values,
        next,
    })
}

/// Final head: `R = [x, y, z, alpha, beta, gamma, l, h, w, score]` per row, offsets
/// relative to the previous box. With `anchor_votes` each row's translation is its
/// sampled vote plus a predicted residual.
pub fn head_forward(g: &mut Graph, p: &Binding, cfg: &TrackerConfig, x: Var, anchors: Var) -> Result<Var> {
    let raw = mlp2(g, p, "head", x)?;
    let d = g.value(raw).rows();
    let mut trans = g.slice_cols(raw, 0, 3)?;
    if cfg.anchor_votes {
        trans = g.add(trans, anchors)?;
    }
    match cfg.box_dof {
        BoxDof::Nine => {
            let rest = g.slice_cols(raw, 3, 10)?;
            g.concat_cols(&[trans, rest])
        }
        BoxDof::Seven => {
            let yaw = g.slice_cols(raw, 3, 4)?;
            let tilt = g.constant(Tensor::zeros(alloc::vec![d, 2]))?;
            let rest = g.slice_cols(raw, 4, 8)?;
            g.concat_cols(&[trans, yaw, tilt, rest])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub bbox: Box9DoF,
    /// Sigmoid of the selected row's score logit.
    pub score: f64,
    pub row: usize,
    pub table: Tensor,
}

/// Applies the highest-scoring row of `table` (ties to the lowest row) to `prev`.
pub fn decode_box(table: &Tensor, prev: &Box9DoF) -> Result<TrackOutput> {
    if table.cols() != 10 || table.rows() == 0 {
        return Err(Error::Shape(format!("decode expects [D x 10], got {:?}", table.shape())));
    }
    let mut row = 0;
    for r in 1..table.rows() {
        if table.at(r, 9) > table.at(row, 9) {
            row = r;
        }
    }
    let o = table.row(row);
    if !o.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("decode_box".into()));
    }
    let center = prev.center() + Vec3::new(o[0], o[1], o[2]);
    let angles = prev.angles() + Vec3::new(o[3], o[4], o[5]);
    let s = prev.size();
    let size = Vec3::new(s.x + o[8], s.y + o[7], s.z + o[6]).map(|v| v.max(MIN_SIZE));
    let bbox = Box9DoF::new(center, size, angles)?;
    Ok(TrackOutput { bbox, score: sigmoid(o[9]), row, table: table.clone() })
}

/// Voxel grid spanning the search region of a crop around `reference`, in relative coordinates.
pub fn region_grid(cfg: &TrackerConfig, reference: &Box9DoF) -> Result<VoxelGrid> {
    let e = reference.scaled(cfg.search_scale)?.aabb_half_extent();
    VoxelGrid::new(cfg.voxel_grid, -e, e).map_err(|_| invalid!("degenerate search region extent {:?}", e.as_slice()))
}

/// Everything one search frame produces.
#[derive(Debug, Clone)]
pub struct SearchForward {
    pub encoded: Encoded,
    pub stages: Vec<StageOutput>,
    pub table: Var,
}

/// Backbone, the stage cascade and the final head for one cropped search region.
pub fn forward_search(
    g: &mut Graph,
    p: &Binding,
    cfg: &TrackerConfig,
    points_rel: &[Vec3],
    mem: &MemoryView,
    region: &VoxelGrid,
) -> Result<SearchForward> {
    let encoded = backbone(g, p, cfg, points_rel)?;
    let mut x = encoded.features;
    let mut coords = encoded.coords.clone();
    let mut coords_var = g.constant(coords_tensor(&coords))?;
    let mut stages = Vec::with_capacity(cfg.stages);
    for s in 0..cfg.stages {
        let out = stage_forward(g, p, cfg, s, x, coords_var, &coords, mem, region)?;
        x = out.next;
        coords_var = out.sampled_votes;
        coords = out.sampled_vote_values.clone();
        stages.push(out);
    }
    let table = head_forward(g, p, cfg, x, coords_var)?;
    Ok(SearchForward { encoded, stages, table })
}
