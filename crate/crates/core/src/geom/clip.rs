//! Convex polytope clipping for oriented-box intersection volumes.

use alloc::vec::Vec;

use super::{box_corners, Box9DoF};
use crate::math::{atan2, Vec3};

/// Signed-distance tolerance used when classifying vertices against a clip plane, meters.
pub const CLIP_EPS: f64 = 1e-9;
/// Intersections with a smaller volume (cubic meters) are reported as empty.
pub const VOLUME_EPS: f64 = 1e-12;

type Face = Vec<Vec3>;

/// Corner indices of the six box faces, each listed in cyclic order.
const FACES: [[usize; 4]; 6] = [
    [0, 2, 6, 4], // -x
    [1, 5, 7, 3], // +x
    [0, 4, 5, 1], // -y
    [2, 3, 7, 6], // +y
    [0, 1, 3, 2], // -z
    [4, 6, 7, 5], // +z
];

fn box_faces(b: &Box9DoF) -> Vec<Face> {
    let c = box_corners(b);
    FACES.iter().map(|f| f.iter().map(|&i| c[i]).collect()).collect()
}

/// Keeps the part of `faces` with `n . x <= d`, closing the cut with a cap face.
fn clip_by_plane(faces: Vec<Face>, n: &Vec3, d: f64) -> Vec<Face> {
    let any_outside = faces.iter().flatten().any(|p| n.dot(p) - d > CLIP_EPS);
    if !any_outside {
        return faces;
    }
    let mut out = Vec::with_capacity(faces.len() + 1);
    let mut cap: Vec<Vec3> = Vec::new();
    for face in faces {
        let dist: Vec<f64> = face.iter().map(|p| n.dot(p) - d).collect();
        let mut clipped = Vec::with_capacity(face.len() + 2);
        for i in 0..face.len() {
            let j = (i + 1) % face.len();
            let (p, q) = (face[i], face[j]);
            let (dp, dq) = (dist[i], dist[j]);
            let p_in = dp <= CLIP_EPS;
            let q_in = dq <= CLIP_EPS;
            if p_in {
                clipped.push(p);
                if dp.abs() <= CLIP_EPS {
                    cap.push(p);
                }
            }
            if p_in != q_in && (dp.abs() > CLIP_EPS && dq.abs() > CLIP_EPS) {
                let t = dp / (dp - dq);
                let x = p + (q - p) * t;
                clipped.push(x);
                cap.push(x);
            }
        }
        if clipped.len() >= 3 {
            out.push(clipped);
        }
    }
    if let Some(face) = build_cap(cap, n) {
        out.push(face);
    }
    out
}

/// Orders coplanar points by angle around their centroid after removing duplicates.
fn build_cap(points: Vec<Vec3>, n: &Vec3) -> Option<Face> {
    let mut uniq: Vec<Vec3> = Vec::with_capacity(points.len());
    for p in points {
        if !uniq.iter().any(|q| (q - p).norm_squared() < CLIP_EPS * CLIP_EPS) {
            uniq.push(p);
        }
    }
    if uniq.len() < 3 {
        return None;
    }
    let centroid = uniq.iter().sum::<Vec3>() / uniq.len() as f64;
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    let mut keyed: Vec<(f64, Vec3)> = uniq
        .into_iter()
        .map(|p| {
            let r = p - centroid;
            (atan2(r.dot(&v), r.dot(&u)), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(keyed.into_iter().map(|(_, p)| p).collect())
}

/// Volume of a closed convex polytope given by convex, cyclically ordered faces.
fn polytope_volume(faces: &[Face]) -> f64 {
    let count: usize = faces.iter().map(Vec::len).sum();
    if count == 0 {
        return 0.0;
    }
    let centroid = faces.iter().flatten().sum::<Vec3>() / count as f64;
    let mut vol = 0.0;
    for face in faces {
        let a = face[0] - centroid;
        for w in face[1..].windows(2) {
            let b = w[0] - centroid;
            let c = w[1] - centroid;
            vol += a.dot(&b.cross(&c)).abs();
        }
    }
    vol / 6.0
}

fn spheres_disjoint(a: &Box9DoF, b: &Box9DoF) -> bool {
    (a.center() - b.center()).norm() > 0.5 * (a.diagonal() + b.diagonal())
}

/// Volume of `a ∩ b`, by clipping `a`'s polytope against the six half-spaces of `b`.
pub fn intersection_volume(a: &Box9DoF, b: &Box9DoF) -> f64 {
    if spheres_disjoint(a, b) {
        return 0.0;
    }
    let rb = b.rotation();
    let hb = b.size() * 0.5;
    let mut faces = box_faces(a);
    for axis in 0..3 {
        let dir: Vec3 = rb.column(axis).into();
        for sign in [1.0, -1.0] {
            let n = dir * sign;
            let d = n.dot(&b.center()) + hb[axis];
            faces = clip_by_plane(faces, &n, d);
            if faces.len() < 4 {
                return 0.0;
            }
        }
    }
    let v = polytope_volume(&faces);
    if v < VOLUME_EPS {
        0.0
    } else {
        v
    }
}
