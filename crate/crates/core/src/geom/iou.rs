use core::f64::consts::PI;

use super::{intersection_volume, Box9DoF, SymmetrySpec};

/// Intersection over union of two oriented boxes.
pub fn iou3d(a: &Box9DoF, b: &Box9DoF) -> f64 {
    let inter = intersection_volume(a, b);
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// IoU that tolerates rotational symmetry: the prediction is spun `sym.k` times about
/// its local symmetry axis and the best overlap is kept.
pub fn iou3d_symmetric(pred: &Box9DoF, gt: &Box9DoF, sym: &SymmetrySpec) -> f64 {
    if !sym.symmetric {
        return iou3d(pred, gt);
    }
    let k = sym.k.max(1);
    // j = 0 is the unrotated box; scoring it directly avoids an Euler round trip
    let mut best = iou3d(pred, gt);
    for j in 1..k {
        let theta = 2.0 * PI * j as f64 / k as f64;
        let spun = match pred.rotate_local(sym.axis, theta) {
            Ok(b) => b,
            Err(_) => continue,
        };
        best = best.max(iou3d(&spun, gt));
    }
    best
}
