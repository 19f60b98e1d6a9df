//! Oriented 9DoF box geometry.
//!
//! Rotations follow the intrinsic Z-Y-X convention: `R = Rz(alpha) * Ry(beta) * Rx(gamma)`.
//! A box's local x, y and z axes carry its width, height and length.

mod clip;
mod fps;
mod iou;

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::math::{asin, atan2, is_finite3, sin_cos, wrap_angle, Mat3, Vec3};

pub use clip::{intersection_volume, VOLUME_EPS};
pub use fps::farthest_point_sampling;
pub use iou::{iou3d, iou3d_symmetric};

/// Oriented 3D box: center, size `(w, h, l)` and Euler angles `(alpha, beta, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box9DoF {
    center: Vec3,
    size: Vec3,
    angles: Vec3,
}

impl Box9DoF {
    /// Validates finiteness and positive size; wraps the angles to `(-pi, pi]`.
    pub fn new(center: Vec3, size: Vec3, angles: Vec3) -> Result<Self> {
        if !is_finite3(&center) || !is_finite3(&size) || !is_finite3(&angles) {
            return Err(invalid!("box components must be finite"));
        }
        if size.iter().any(|&s| s <= 0.0) {
            return Err(invalid!("box size must be strictly positive, got {:?}", size.as_slice()));
        }
        Ok(Self {
            center,
            size,
            angles: angles.map(wrap_angle),
        })
    }

    /// Builds a box from `[x, y, z, w, h, l, alpha, beta, gamma]`.
    pub fn from_array(v: [f64; 9]) -> Result<Self> {
        Self::new(
            Vec3::new(v[0], v[1], v[2]),
            Vec3::new(v[3], v[4], v[5]),
            Vec3::new(v[6], v[7], v[8]),
        )
    }

    pub fn to_array(&self) -> [f64; 9] {
        let (c, s, a) = (self.center, self.size, self.angles);
        [c.x, c.y, c.z, s.x, s.y, s.z, a.x, a.y, a.z]
    }

    pub fn axis_aligned(center: Vec3, size: Vec3) -> Result<Self> {
        Self::new(center, size, Vec3::zeros())
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn size(&self) -> Vec3 {
        self.size
    }

    pub fn angles(&self) -> Vec3 {
        self.angles
    }

    pub fn volume(&self) -> f64 {
        self.size.x * self.size.y * self.size.z
    }

    pub fn diagonal(&self) -> f64 {
        self.size.norm()
    }

    pub fn rotation(&self) -> Mat3 {
        rotation_from_angles(&self.angles)
    }

    pub fn with_center(&self, center: Vec3) -> Result<Self> {
        Self::new(center, self.size, self.angles)
    }

    /// Same box with every extent multiplied by `factor` about the center.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.center, self.size * factor, self.angles)
    }

    /// Half extents of the world-axis-aligned box enclosing this box.
    pub fn aabb_half_extent(&self) -> Vec3 {
        let r = self.rotation().abs();
        r * (self.size * 0.5)
    }

    /// Spins the box by `theta` about one of its own local axes.
    pub fn rotate_local(&self, axis: SymmetryAxis, theta: f64) -> Result<Self> {
        let r = self.rotation() * axis_rotation(axis, theta);
        Self::new(self.center, self.size, euler_from_matrix(&r))
    }
}

/// A finite point cloud.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet {
    points: Vec<Vec3>,
}

impl PointSet {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !is_finite3(p)) {
            return Err(invalid!("point {i} has a non-finite coordinate"));
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Local box axis used as the symmetry axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetryAxis {
    X,
    Y,
    Z,
}

/// How a target's rotational symmetry is handled by the IoU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SymmetrySpec {
    pub symmetric: bool,
    pub axis: SymmetryAxis,
    /// Number of discrete spins tried; ignored when `symmetric` is false.
    pub k: u32,
}

impl SymmetrySpec {
    pub const DEFAULT_K: u32 = 120;

    pub fn none() -> Self {
        Self {
            symmetric: false,
            axis: SymmetryAxis::Z,
            k: Self::DEFAULT_K,
        }
    }

    pub fn about(axis: SymmetryAxis) -> Self {
        Self {
            symmetric: true,
            axis,
            k: Self::DEFAULT_K,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid!("symmetry rotation count k must be >= 1"));
        }
        Ok(())
    }
}

impl Default for SymmetrySpec {
    fn default() -> Self {
        Self::none()
    }
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = sin_cos(a);
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Mat3 {
    let (s, c) = sin_cos(a);
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = sin_cos(a);
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn axis_rotation(axis: SymmetryAxis, theta: f64) -> Mat3 {
    match axis {
        SymmetryAxis::X => rot_x(theta),
        SymmetryAxis::Y => rot_y(theta),
        SymmetryAxis::Z => rot_z(theta),
    }
}

fn rotation_from_angles(angles: &Vec3) -> Mat3 {
    rot_z(angles.x) * rot_y(angles.y) * rot_x(angles.z)
}

/// `Rz(alpha) * Ry(beta) * Rx(gamma)` for `angles = (alpha, beta, gamma)`.
pub fn rotation_matrix(angles: Vec3) -> Result<Mat3> {
    if !is_finite3(&angles) {
        return Err(invalid!("rotation angles must be finite"));
    }
    Ok(rotation_from_angles(&angles))
}

/// Inverse of [`rotation_matrix`]; returns `(alpha, beta, gamma)` with beta in `[-pi/2, pi/2]`.
pub fn euler_from_matrix(r: &Mat3) -> Vec3 {
    let sb = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let beta = asin(sb);
    if sb.abs() < 1.0 - 1e-12 {
        let alpha = atan2(r[(1, 0)], r[(0, 0)]);
        let gamma = atan2(r[(2, 1)], r[(2, 2)]);
        Vec3::new(alpha, beta, gamma)
    } else {
        // gimbal lock: fold everything into alpha
        let alpha = atan2(-r[(0, 1)], r[(1, 1)]);
        Vec3::new(alpha, beta, 0.0)
    }
}

/// The 8 corners; corner `i` takes the `+` half extent on local x/y/z when bit 0/1/2 of `i` is set.
pub fn box_corners(b: &Box9DoF) -> [Vec3; 8] {
    let r = b.rotation();
    let h = b.size * 0.5;
    core::array::from_fn(|i| {
        let local = Vec3::new(
            if i & 1 != 0 { h.x } else { -h.x },
            if i & 2 != 0 { h.y } else { -h.y },
            if i & 4 != 0 { h.z } else { -h.z },
        );
        b.center + r * local
    })
}

/// Closed-box containment test.
pub fn contains(b: &Box9DoF, p: &Vec3) -> bool {
    contains_with(&b.rotation(), b, p)
}

fn contains_with(r: &Mat3, b: &Box9DoF, p: &Vec3) -> bool {
    let local = r.transpose() * (p - b.center);
    let h = b.size * 0.5;
    local.x.abs() <= h.x && local.y.abs() <= h.y && local.z.abs() <= h.z
}

/// Counts the points of `cloud` inside `b`.
pub fn count_inside(cloud: &[Vec3], b: &Box9DoF) -> usize {
    let r = b.rotation();
    cloud.iter().filter(|p| contains_with(&r, b, p)).count()
}

/// Points inside `b` scaled by `scale` about its center, in input order, plus their source indices.
pub fn crop_points(cloud: &PointSet, b: &Box9DoF, scale: f64) -> Result<(PointSet, Vec<usize>)> {
    if !(scale >= 1.0) || !scale.is_finite() {
        return Err(invalid!("crop scale must be >= 1, got {scale}"));
    }
    let region = b.scaled(scale)?;
    let r = region.rotation();
    let mut points = Vec::new();
    let mut index = Vec::new();
    for (i, p) in cloud.points().iter().enumerate() {
        if contains_with(&r, &region, p) {
            points.push(*p);
            index.push(i);
        }
    }
    Ok((PointSet { points }, index))
}
