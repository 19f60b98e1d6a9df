use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box parameterization emitted by the final head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxDof {
    /// Full 9DoF offsets.
    Nine,
    /// Yaw-only boxes: the head emits 7 offsets and pitch/roll offsets are fixed to 0.
    Seven,
}

/// Which cascade stages receive the mask, center and proposal losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageSupervision {
    EveryStage,
    FinalStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub stages: usize,
    pub memory_size: usize,
    pub spt_layers: usize,
    pub search_points: usize,
    pub sampled_points: usize,
    pub search_scale: f64,
    pub feature_width: usize,
    pub knn: usize,
    pub positive_radius: f64,
    pub lambda_mask: f64,
    pub lambda_center: f64,
    pub lambda_proposal: f64,
    pub lambda_score: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub box_dof: BoxDof,
    pub stage_supervision: StageSupervision,
    /// Width of the 1-D convolution that embeds sampled score logits.
    pub score_conv_width: usize,
    /// Cells per axis of the feature-transformation voxel grid.
    pub voxel_grid: usize,
    /// Predict final-head translations relative to each row's sampled vote.
    pub anchor_votes: bool,
    /// Training tuples drawn per sequence per epoch.
    pub tuples_per_sequence: usize,
    /// Std-dev (m) of the center jitter applied to training crop references.
    pub train_jitter: f64,
    /// Std-dev (rad) of the per-angle jitter applied to training crop references.
    pub train_angle_jitter: f64,
    /// Std-dev of the relative size jitter applied to training crop references.
    pub train_size_jitter: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            stages: 2,
            memory_size: 3,
            spt_layers: 2,
            search_points: 128,
            sampled_points: 64,
            search_scale: 2.0,
            feature_width: 64,
            knn: 8,
            positive_radius: 0.3,
            lambda_mask: 0.2,
            lambda_center: 10.0,
            lambda_proposal: 1.0,
            lambda_score: 1.0,
            learning_rate: 1e-3,
            batch_size: 9,
            epochs: 80,
            box_dof: BoxDof::Nine,
            stage_supervision: StageSupervision::EveryStage,
            score_conv_width: 1,
            voxel_grid: 8,
            anchor_votes: true,
            tuples_per_sequence: 6,
            train_jitter: 0.1,
            train_angle_jitter: 0.0,
            train_size_jitter: 0.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("tracker config: {m}")));
        if self.stages == 0 || self.memory_size == 0 || self.spt_layers == 0 {
            return bad("stages, memory size and SPT layers must be >= 1");
        }
        if self.search_points == 0 || self.sampled_points == 0 || self.feature_width == 0 || self.batch_size == 0 {
            return bad("point counts, feature width and batch size must be positive");
        }
        if self.sampled_points > self.search_points {
            return bad("sampled points D must not exceed search points P");
        }
        if self.knn == 0 || self.knn >= self.sampled_points {
            return bad("kNN k must satisfy 1 <= k < D");
        }
        if self.score_conv_width % 2 == 0 {
            return bad("score conv width must be odd");
        }
        if self.voxel_grid < 2 {
            return bad("voxel grid needs at least 2 cells per axis");
        }
        if !(self.search_scale >= 1.0) || !(self.positive_radius > 0.0) || !(self.learning_rate > 0.0) {
            return bad("search scale >= 1, positive radius > 0 and learning rate > 0 required");
        }
        if !(self.train_jitter >= 0.0) || !(self.train_angle_jitter >= 0.0) || !(self.train_size_jitter >= 0.0) {
            return bad("train jitter must be non-negative");
        }
        for l in [self.lambda_mask, self.lambda_center, self.lambda_proposal, self.lambda_score] {
            if !(l >= 0.0) || !l.is_finite() {
                return bad("loss weights must be finite and non-negative");
            }
        }
        Ok(())
    }

    /// Columns of the final head: offsets plus one score logit.
    pub fn head_outputs(&self) -> usize {
        match self.box_dof {
            BoxDof::Nine => 10,
            BoxDof::Seven => 8,
        }
    }
}
