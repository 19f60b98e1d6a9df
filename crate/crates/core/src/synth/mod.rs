//! Deterministic synthetic point-cloud sequences with exact 9DoF ground truth.
//!
//! A scenario samples a rigid target (box shell, elliptic cylinder shell or a stacked
//! composite) on a motion trajectory, then adds sensor noise, distractor objects, a
//! static ground plane and static clutter. Occlusion windows thin or remove the target.
//! Clouds are rounded to `f32` precision so that they survive the on-disk format
//! unchanged.

mod attributes;
mod shapes;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{count_inside, Box9DoF, PointSet, SymmetrySpec};
use crate::math::Vec3;
use crate::metrics::{Attributes, SequenceTruth};

pub use attributes::{auto_attributes, ROT_THRESHOLD_DEG, SPA_MIN_POINTS, SV_RANGE};
pub use shapes::{sample_surface, surface_area};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetShape {
    BoxShell,
    CylinderShell,
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MotionModel {
    ConstantVelocity,
    /// Velocity (and angular velocity) take a Gaussian step every frame, clamped to the ranges.
    RandomWalk { step: f64, angular_step: f64 },
}

/// Frames `start..end` lose `drop_fraction` of the target points; `1.0` hides the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionWindow {
    pub start: usize,
    pub end: usize,
    pub drop_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub frames: usize,
    pub shape: TargetShape,
    pub size_min: [f64; 3],
    pub size_max: [f64; 3],
    /// Relative size change per frame (`size_t = size_0 * (1 + growth * t)`).
    pub size_growth: f64,
    pub start_center: [f64; 3],
    pub angles_min: [f64; 3],
    pub angles_max: [f64; 3],
    /// Target surface points per square meter.
    pub density: f64,
    pub motion: MotionModel,
    /// m/frame, sampled per component.
    pub velocity_min: [f64; 3],
    pub velocity_max: [f64; 3],
    /// rad/frame, sampled per component.
    pub angular_velocity_min: [f64; 3],
    pub angular_velocity_max: [f64; 3],
    /// Static points scattered uniformly around the trajectory.
    pub clutter_points: usize,
    /// Static points on the plane under the target's first-frame box.
    pub ground_points: usize,
    /// Margin around the trajectory for clutter and ground, meters.
    pub scene_margin: f64,
    pub distractors: usize,
    pub similar_distractors: bool,
    pub occlusions: Vec<OcclusionWindow>,
    pub noise_sigma: f64,
    pub category: String,
    pub symmetry: SymmetrySpec,
    pub fps: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 20,
            shape: TargetShape::BoxShell,
            size_min: [1.0, 1.0, 1.0],
            size_max: [1.0, 1.0, 1.0],
            size_growth: 0.0,
            start_center: [0.0, 0.0, 0.0],
            angles_min: [0.0; 3],
            angles_max: [0.0; 3],
            density: 200.0,
            motion: MotionModel::ConstantVelocity,
            velocity_min: [0.0; 3],
            velocity_max: [0.0; 3],
            angular_velocity_min: [0.0; 3],
            angular_velocity_max: [0.0; 3],
            clutter_points: 0,
            ground_points: 0,
            scene_margin: 4.0,
            distractors: 0,
            similar_distractors: false,
            occlusions: Vec::new(),
            noise_sigma: 0.0,
            category: String::from("object"),
            symmetry: SymmetrySpec::none(),
            fps: 20.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(alloc::format!("scenario: {m}")));
        if self.frames < 2 {
            return bad("frame count must be >= 2");
        }
        if !(self.density >= 0.0) || !(self.noise_sigma >= 0.0) || !(self.scene_margin >= 0.0) {
            return bad("density, noise and margin must be non-negative");
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive");
        }
        for a in 0..3 {
            if !(self.size_min[a] > 0.0) || self.size_max[a] < self.size_min[a] {
                return bad("size range must be positive and ordered");
            }
            if self.velocity_max[a] < self.velocity_min[a]
                || self.angular_velocity_max[a] < self.angular_velocity_min[a]
                || self.angles_max[a] < self.angles_min[a]
            {
                return bad("ranges must be ordered (min <= max)");
            }
        }
        for w in &self.occlusions {
            if w.start >= w.end || !(0.0..=1.0).contains(&w.drop_fraction) {
                return bad("occlusion windows need start < end and drop fraction in [0, 1]");
            }
        }
        if self.category.is_empty() {
            return bad("category must be non-empty");
        }
        self.symmetry.validate()
    }
}

/// A generated sequence held in memory, plus what the generator knows beyond the annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSequence {
    pub category: String,
    pub symmetry: SymmetrySpec,
    pub fps: f64,
    /// Annotated box per frame; `None` for fully occluded frames.
    pub boxes: Vec<Option<Box9DoF>>,
    /// Generating pose for every frame, including hidden ones.
    pub poses: Vec<Box9DoF>,
    pub clouds: Vec<PointSet>,
    /// Frames that lost part of the target to an occlusion window.
    pub partially_occluded: Vec<bool>,
    pub similar_distractors: bool,
    pub attributes: Attributes,
}

impl GeneratedSequence {
    pub fn num_frames(&self) -> usize {
        self.boxes.len()
    }

    pub fn truth(&self, id: &str) -> SequenceTruth {
        SequenceTruth {
            id: String::from(id),
            category: self.category.clone(),
            attributes: self.attributes,
            symmetry: self.symmetry,
            boxes: self.boxes.clone(),
        }
    }
}

fn uniform3(rng: &mut ChaCha8Rng, lo: &[f64; 3], hi: &[f64; 3]) -> Vec3 {
    Vec3::from_fn(|a, _| if hi[a] > lo[a] { rng.random_range(lo[a]..hi[a]) } else { lo[a] })
}

fn to_f32(p: Vec3) -> Vec3 {
    p.map(|v| v as f32 as f64)
}

struct Trajectory {
    poses: Vec<Box9DoF>,
}

fn trajectory(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng, start: Vec3, size0: Vec3, angles0: Vec3) -> Result<Trajectory> {
    let mut vel = uniform3(rng, &cfg.velocity_min, &cfg.velocity_max);
    let mut omega = uniform3(rng, &cfg.angular_velocity_min, &cfg.angular_velocity_max);
    let mut center = start;
    let mut angles = angles0;
    let mut poses = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        if t > 0 {
            if let MotionModel::RandomWalk { step, angular_step } = cfg.motion {
                let n = Normal::new(0.0, step.max(0.0)).map_err(|e| Error::InvalidArgument(alloc::format!("{e}")))?;
                let na = Normal::new(0.0, angular_step.max(0.0)).map_err(|e| Error::InvalidArgument(alloc::format!("{e}")))?;
                for a in 0..3 {
                    vel[a] = (vel[a] + n.sample(rng)).clamp(cfg.velocity_min[a], cfg.velocity_max[a]);
                    omega[a] = (omega[a] + na.sample(rng)).clamp(cfg.angular_velocity_min[a], cfg.angular_velocity_max[a]);
                }
            }
            center += vel;
            angles += omega;
        }
        let growth = 1.0 + cfg.size_growth * t as f64;
        if growth <= 0.0 {
            return Err(Error::Generation(alloc::format!("size growth collapses the target at frame {t}")));
        }
        poses.push(Box9DoF::new(center, size0 * growth, angles)?);
    }
    Ok(Trajectory { poses })
}

/// Generates one sequence; deterministic in `cfg`.
pub fn generate_sequence(cfg: &ScenarioConfig) -> Result<GeneratedSequence> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let size0 = uniform3(&mut rng, &cfg.size_min, &cfg.size_max);
    let angles0 = uniform3(&mut rng, &cfg.angles_min, &cfg.angles_max);
    let start = Vec3::from(cfg.start_center);
    let target = trajectory(cfg, &mut rng, start, size0, angles0)?;

    // distractors: same shape and size when similar, otherwise another shape at another scale
    let mut distractors: Vec<(TargetShape, Trajectory)> = Vec::new();
    for _ in 0..cfg.distractors {
        let (shape, size) = if cfg.similar_distractors {
            (cfg.shape, size0)
        } else {
            let shapes = [TargetShape::BoxShell, TargetShape::CylinderShell, TargetShape::Composite];
            let others: Vec<TargetShape> = shapes.into_iter().filter(|s| *s != cfg.shape).collect();
            let s = others[rng.random_range(0..others.len())];
            let f = Vec3::from_fn(|_, _| rng.random_range(0.4..0.8));
            (s, size0.component_mul(&f))
        };
        let theta = rng.random_range(0.0..core::f64::consts::TAU);
        let dist = rng.random_range(2.5..4.0) * size0.norm().max(size.norm());
        let offset = Vec3::new(libm::cos(theta) * dist, libm::sin(theta) * dist, (size.z - size0.z) * 0.5);
        let angles = uniform3(&mut rng, &cfg.angles_min, &cfg.angles_max);
        distractors.push((shape, trajectory(cfg, &mut rng, start + offset, size, angles)?));
    }

    // static background around every box the scene will contain
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for pose in target.poses.iter().chain(distractors.iter().flat_map(|d| d.1.poses.iter())) {
        let e = pose.aabb_half_extent();
        lo = lo.inf(&(pose.center() - e));
        hi = hi.sup(&(pose.center() + e));
    }
    let margin = Vec3::repeat(cfg.scene_margin);
    let (lo, hi) = (lo - margin, hi + margin);
    let ground_z = target.poses[0].center().z - target.poses[0].aabb_half_extent().z;
    let mut background = Vec::with_capacity(cfg.clutter_points + cfg.ground_points);
    for _ in 0..cfg.clutter_points {
        let p = Vec3::from_fn(|a, _| rng.random_range(lo[a]..hi[a]));
        background.push(to_f32(p));
    }
    for _ in 0..cfg.ground_points {
        let p = Vec3::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y), ground_z);
        background.push(to_f32(p));
    }

    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidArgument(alloc::format!("{e}")))?;
    let mut boxes = Vec::with_capacity(cfg.frames);
    let mut clouds = Vec::with_capacity(cfg.frames);
    let mut partial = vec![false; cfg.frames];
    for t in 0..cfg.frames {
        let pose = target.poses[t];
        let drop = cfg
            .occlusions
            .iter()
            .filter(|w| (w.start..w.end).contains(&t))
            .map(|w| w.drop_fraction)
            .fold(0.0f64, f64::max);
        let present = drop < 1.0;
        let mut pts: Vec<Vec3> = Vec::new();
        if present {
            for p in sample_surface(cfg.shape, &pose, cfg.density, &mut rng) {
                if drop > 0.0 && rng.random_bool(drop) {
                    partial[t] = true;
                    continue;
                }
                pts.push(p);
            }
        }
        for (shape, traj) in &distractors {
            pts.extend(sample_surface(*shape, &traj.poses[t], cfg.density, &mut rng));
        }
        if cfg.noise_sigma > 0.0 {
            for p in pts.iter_mut() {
                *p += Vec3::from_fn(|_, _| noise.sample(&mut rng));
            }
        }
        let mut pts: Vec<Vec3> = pts.into_iter().map(to_f32).collect();
        pts.extend_from_slice(&background);
        pts.shuffle(&mut rng);
        if present && count_inside(&pts, &pose) == 0 {
            return Err(Error::Generation(alloc::format!(
                "frame {t} is annotated present but no point lies inside the target box; mark it occluded or raise the density"
            )));
        }
        boxes.push(if present { Some(pose) } else { None });
        clouds.push(PointSet::new(pts)?);
    }
    if boxes[0].is_none() {
        return Err(Error::Generation("the first frame must show the target".into()));
    }

    let mut seq = GeneratedSequence {
        category: cfg.category.clone(),
        symmetry: cfg.symmetry,
        fps: cfg.fps,
        boxes,
        poses: target.poses,
        clouds,
        partially_occluded: partial,
        similar_distractors: cfg.distractors > 0 && cfg.similar_distractors,
        attributes: Attributes::default(),
    };
    seq.attributes = auto_attributes(&seq);
    Ok(seq)
}
