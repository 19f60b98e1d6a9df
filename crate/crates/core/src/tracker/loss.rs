use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::{StageSupervision, TrackerConfig};
use super::model::SearchForward;
use crate::error::Result;
use crate::geom::{contains, Box9DoF};
use crate::math::{wrap_angle, Vec3};
use crate::nn::{Graph, Tensor, Var};

/// Ground truth of a search frame in crop-relative coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTarget {
    pub gt_rel: Box9DoF,
    /// `gt - reference` as `[x, y, z, alpha, beta, gamma, l, h, w]`, angles on the shortest arc.
    pub offsets: [f64; 9],
}

impl FrameTarget {
    pub fn new(gt: &Box9DoF, reference: &Box9DoF) -> Result<Self> {
        let gt_rel = gt.with_center(gt.center() - reference.center())?;
        let dc = gt_rel.center();
        let da = gt.angles() - reference.angles();
        let (gs, rs) = (gt.size(), reference.size());
        let offsets = [
            dc.x,
            dc.y,
            dc.z,
            wrap_angle(da.x),
            wrap_angle(da.y),
            wrap_angle(da.z),
            gs.z - rs.z,
            gs.y - rs.y,
            gs.x - rs.x,
        ];
        Ok(Self { gt_rel, offsets })
    }
}

/// Unweighted components and the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub mask: f64,
    pub center: f64,
    pub proposal: f64,
    pub score: f64,
    pub bbox: f64,
}

impl LossBreakdown {
    pub fn accumulate(&mut self, other: &LossBreakdown) {
        self.total += other.total;
        self.mask += other.mask;
        self.center += other.center;
        self.proposal += other.proposal;
        self.score += other.score;
        self.bbox += other.bbox;
    }

    pub fn scaled(&self, s: f64) -> LossBreakdown {
        LossBreakdown {
            total: self.total * s,
            mask: self.mask * s,
            center: self.center * s,
            proposal: self.proposal * s,
            score: self.score * s,
            bbox: self.bbox * s,
        }
    }
}

fn repeated_rows(row: &[f64], n: usize) -> Result<Tensor> {
    let data = (0..n).flat_map(|_| row.iter().copied()).collect();
    Tensor::matrix(n, row.len(), data)
}

fn flag(b: bool) -> f64 {
    f64::from(u8::from(b))
}

fn sum_vars(g: &mut Graph, parts: &[Var]) -> Result<Option<Var>> {
    let mut acc: Option<Var> = None;
    for &v in parts {
        acc = Some(match acc {
            None => v,
            Some(a) => g.add(a, v)?,
        });
    }
    Ok(acc)
}

/// Weighted training objective of one search frame.
///
/// Mask, center and proposal terms are per-stage means summed over the supervised
/// stages. Box regression covers every final row whose decoded center lies within the
/// positive radius, or the nearest row when none does.
pub fn loss_total(g: &mut Graph, cfg: &TrackerConfig, fwd: &SearchForward, target: &FrameTarget) -> Result<(Var, LossBreakdown)> {
    let gt_c = target.gt_rel.center();
    let r2 = cfg.positive_radius * cfg.positive_radius;
    let first = match cfg.stage_supervision {
        StageSupervision::EveryStage => 0,
        StageSupervision::FinalStage => fwd.stages.len() - 1,
    };
    let (mut lm, mut lc, mut lp) = (Vec::new(), Vec::new(), Vec::new());
    for st in &fwd.stages[first..] {
        let inside: Vec<f64> = st.input_coords.iter().map(|c| flag(contains(&target.gt_rel, c))).collect();
        let bce = g.bce_with_logits(st.mask_logits, &inside)?;
        lm.push(g.mean(bce)?);

        let rows: Vec<usize> = (0..inside.len()).filter(|&i| inside[i] > 0.5).collect();
        if !rows.is_empty() {
            let v = g.gather_rows(st.votes, &rows)?;
            let c = g.constant(repeated_rows(gt_c.as_slice(), rows.len())?)?;
            let d = g.sub(v, c)?;
            let sq = g.mul(d, d)?;
            lc.push(g.mean(sq)?);
        }

        let near: Vec<f64> = st.vote_values.iter().map(|v| flag((v - gt_c).norm_squared() < r2)).collect();
        let bce = g.bce_with_logits(st.score_logits, &near)?;
        lp.push(g.mean(bce)?);
    }

    let table = g.value(fwd.table).clone();
    let dist: Vec<f64> = (0..table.rows())
        .map(|r| (Vec3::from_row_slice(&table.row(r)[..3]) - gt_c).norm_squared())
        .collect();
    let labels: Vec<f64> = dist.iter().map(|&d| flag(d < r2)).collect();
    let score_col = g.slice_cols(fwd.table, 9, 10)?;
    let bce = g.bce_with_logits(score_col, &labels)?;
    let ls = g.mean(bce)?;

    let mut pos: Vec<usize> = (0..labels.len()).filter(|&r| labels[r] > 0.5).collect();
    if pos.is_empty() {
        let nearest = (0..dist.len()).fold(0, |best, r| if dist[r] < dist[best] { r } else { best });
        pos = vec![nearest];
    }
    let rows = g.gather_rows(fwd.table, &pos)?;
    let pred = g.slice_cols(rows, 0, 9)?;
    let tgt = g.constant(repeated_rows(&target.offsets, pos.len())?)?;
    let diff = g.sub(pred, tgt)?;
    let sl1 = g.smooth_l1(diff)?;
    let lb = g.mean(sl1)?;

    let mut terms = Vec::new();
    let mut parts = LossBreakdown::default();
    for (vars, lambda, slot) in [
        (&lm, cfg.lambda_mask, &mut parts.mask),
        (&lc, cfg.lambda_center, &mut parts.center),
        (&lp, cfg.lambda_proposal, &mut parts.proposal),
    ] {
        if let Some(s) = sum_vars(g, vars)? {
            *slot = g.scalar(s);
            terms.push(g.scale(s, lambda)?);
        }
    }
    parts.score = g.scalar(ls);
    terms.push(g.scale(ls, cfg.lambda_score)?);
    parts.bbox = g.scalar(lb);
    terms.push(lb);
    let total = sum_vars(g, &terms)?.expect("score and box terms are always present");
    parts.total = g.scalar(total);
    Ok((total, parts))
}
