use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand::Rng;

use super::TargetShape;
use crate::geom::Box9DoF;
use crate::math::{sin_cos, sqrt, Vec3};

/// Surface samples sit this far inside the box so that rounding never pushes them out.
const INSET: f64 = 1e-4;

/// Share of the composite's height taken by its lower block.
const COMPOSITE_BASE: f64 = 0.55;
/// Footprint scale of the composite's upper block.
const COMPOSITE_TOP: f64 = 0.6;

fn box_area(h: Vec3) -> f64 {
    8.0 * (h.x * h.y + h.y * h.z + h.x * h.z)
}

fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    // Ramanujan's approximation
    PI * (3.0 * (a + b) - sqrt((3.0 * a + b) * (a + 3.0 * b)))
}

fn cylinder_area(h: Vec3) -> f64 {
    ellipse_perimeter(h.x, h.y) * 2.0 * h.z + 2.0 * PI * h.x * h.y
}

/// The two blocks of the composite as (center offset, half extents) in the local frame.
fn composite_blocks(h: Vec3) -> [(Vec3, Vec3); 2] {
    let base_h = h.z * COMPOSITE_BASE;
    let top_h = h.z - base_h;
    [
        (Vec3::new(0.0, 0.0, -h.z + base_h), Vec3::new(h.x, h.y, base_h)),
        (Vec3::new(0.0, 0.0, h.z - top_h), Vec3::new(h.x * COMPOSITE_TOP, h.y * COMPOSITE_TOP, top_h)),
    ]
}

fn half_extent(size: Vec3) -> Vec3 {
    (size * 0.5).map(|v| (v - INSET).max(v * 0.5))
}

/// Outer surface area of `shape` fitted to a box of `size`.
pub fn surface_area(shape: TargetShape, size: Vec3) -> f64 {
    let h = half_extent(size);
    match shape {
        TargetShape::BoxShell => box_area(h),
        TargetShape::CylinderShell => cylinder_area(h),
        TargetShape::Composite => composite_blocks(h).iter().map(|(_, e)| box_area(*e)).sum(),
    }
}

fn sample_box<R: Rng + ?Sized>(h: Vec3, rng: &mut R) -> Vec3 {
    let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
    let total: f64 = areas.iter().sum();
    let mut u = rng.random_range(0.0..total);
    let mut axis = 2;
    for (a, w) in areas.iter().enumerate() {
        if u < *w {
            axis = a;
            break;
        }
        u -= w;
    }
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    Vec3::from_fn(|a, _| if a == axis { sign * h[a] } else { rng.random_range(-h[a]..=h[a]) })
}

fn sample_cylinder<R: Rng + ?Sized>(h: Vec3, rng: &mut R) -> Vec3 {
    let lateral = ellipse_perimeter(h.x, h.y) * 2.0 * h.z;
    let cap = PI * h.x * h.y;
    let (s, c) = sin_cos(rng.random_range(0.0..TAU));
    if rng.random_range(0.0..lateral + 2.0 * cap) < lateral {
        Vec3::new(h.x * c, h.y * s, rng.random_range(-h.z..=h.z))
    } else {
        let r = sqrt(rng.random_range(0.0..=1.0));
        let z = if rng.random_bool(0.5) { h.z } else { -h.z };
        Vec3::new(h.x * r * c, h.y * r * s, z)
    }
}

/// `round(density * area)` points on the surface of `shape` posed as `pose`, in world coordinates.
pub fn sample_surface<R: Rng + ?Sized>(shape: TargetShape, pose: &Box9DoF, density: f64, rng: &mut R) -> Vec<Vec3> {
    let h = half_extent(pose.size());
    let n = libm::round(density * surface_area(shape, pose.size())) as usize;
    let rot = pose.rotation();
    let blocks = composite_blocks(h);
    let block_area = [box_area(blocks[0].1), box_area(blocks[1].1)];
    (0..n)
        .map(|_| {
            let local = match shape {
                TargetShape::BoxShell => sample_box(h, rng),
                TargetShape::CylinderShell => sample_cylinder(h, rng),
                TargetShape::Composite => {
                    let b = usize::from(rng.random_range(0.0..block_area[0] + block_area[1]) >= block_area[0]);
                    blocks[b].0 + sample_box(blocks[b].1, rng)
                }
            };
            pose.center() + rot * local
        })
        .collect()
}
