//! Point features to a coarse voxel grid, one 3x3x3 convolution, and back to points.
//!
//! Only the voxels that the trilinear gather reads are convolved; every other output
//! voxel is never observed, so the result equals a dense convolution followed by the
//! gather.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::graph::TrilinearTap;
use super::{layers::linear, Binding, Graph, Var};
use crate::error::{invalid, Error, Result};
use crate::math::{floor, Vec3};

/// Axis-aligned `size^3` grid spanning `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    pub size: usize,
    pub min: Vec3,
    pub max: Vec3,
}

impl VoxelGrid {
    pub fn new(size: usize, min: Vec3, max: Vec3) -> Result<Self> {
        if size < 2 {
            return Err(invalid!("voxel grid needs at least 2 cells per axis"));
        }
        let ext = max - min;
        if !(ext.x > 0.0 && ext.y > 0.0 && ext.z > 0.0) || !ext.iter().all(|v| v.is_finite()) {
            return Err(invalid!("degenerate voxel grid extent {:?}", ext.as_slice()));
        }
        Ok(Self { size, min, max })
    }

    pub fn cell(&self) -> Vec3 {
        (self.max - self.min) / self.size as f64
    }

    /// Integer voxel holding `p`; points outside the grid fall into the boundary voxels.
    pub fn voxel_of(&self, p: &Vec3) -> [usize; 3] {
        let cell = self.cell();
        core::array::from_fn(|a| {
            let v = floor((p[a] - self.min[a]) / cell[a]);
            v.clamp(0.0, (self.size - 1) as f64) as usize
        })
    }

    pub fn flat(&self, v: [usize; 3]) -> usize {
        (v[0] * self.size + v[1]) * self.size + v[2]
    }

    /// Trilinear tap over voxel centres, with corner rows given as flat voxel indices.
    pub fn tap(&self, p: &Vec3) -> TrilinearTap {
        let cell = self.cell();
        let top = (self.size - 1) as f64;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        let mut dfrac = [0.0; 3];
        for a in 0..3 {
            let u = (p[a] - self.min[a]) / cell[a] - 0.5;
            let clamped = u.clamp(0.0, top);
            if u > 0.0 && u < top {
                dfrac[a] = 1.0 / cell[a];
            }
            let i0 = (floor(clamped) as usize).min(self.size - 2);
            base[a] = i0;
            frac[a] = clamped - i0 as f64;
        }
        let rows = core::array::from_fn(|c| self.flat([base[0] + (c & 1), base[1] + (c >> 1 & 1), base[2] + (c >> 2 & 1)]));
        TrilinearTap { rows, frac, dfrac }
    }
}

/// Mean-pools `features` (`[D x C]`) into voxels, convolves with the 3x3x3 kernel `name`
/// (`[27*C x C']`, tap order `(dx+1)*9 + (dy+1)*3 + (dz+1)`, zero padding) and gathers the
/// result back to each point by trilinear interpolation. `coords` must hold the values of
/// `coords_var` (`[D x 3]`), which receives gradients through the interpolation weights.
pub fn voxel_conv_gather(
    g: &mut Graph,
    p: &Binding,
    name: &str,
    features: Var,
    coords_var: Var,
    coords: &[Vec3],
    grid: &VoxelGrid,
) -> Result<Var> {
    let d = g.value(features).rows();
    if coords.len() != d || g.value(coords_var).rows() != d {
        return Err(Error::Shape(alloc::format!(
            "voxel_conv_gather: {} coordinates for features {:?}",
            coords.len(),
            g.value(features).shape()
        )));
    }
    let mut occupied: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in coords.iter().enumerate() {
        occupied.entry(grid.flat(grid.voxel_of(c))).or_default().push(i);
    }
    let occ_row: BTreeMap<usize, usize> = occupied.keys().enumerate().map(|(r, &v)| (v, r)).collect();
    let zero_row = occupied.len();
    let mut rows: Vec<Vec<(usize, f64)>> = occupied
        .values()
        .map(|pts| {
            let w = 1.0 / pts.len() as f64;
            pts.iter().map(|&i| (i, w)).collect()
        })
        .collect();
    rows.push(Vec::new());
    let vox = g.combine_rows(features, rows)?;

    let mut taps: Vec<TrilinearTap> = coords.iter().map(|c| grid.tap(c)).collect();
    let needed: BTreeSet<usize> = taps.iter().flat_map(|t| t.rows).collect();
    let out_row: BTreeMap<usize, usize> = needed.iter().enumerate().map(|(r, &v)| (v, r)).collect();

    let s = grid.size as isize;
    let mut idx = Vec::with_capacity(needed.len() * 27);
    for &v in &needed {
        let vx = (v / (grid.size * grid.size)) as isize;
        let vy = (v / grid.size % grid.size) as isize;
        let vz = (v % grid.size) as isize;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let (x, y, z) = (vx + dx, vy + dy, vz + dz);
                    let r = if x < 0 || y < 0 || z < 0 || x >= s || y >= s || z >= s {
                        zero_row
                    } else {
                        let flat = ((x * s + y) * s + z) as usize;
                        occ_row.get(&flat).copied().unwrap_or(zero_row)
                    };
                    idx.push(r);
                }
            }
        }
    }
    let c = g.value(features).cols();
    let cols = g.gather_rows(vox, &idx)?;
    let cols = g.reshape(cols, needed.len(), 27 * c)?;
    let conv = linear(g, p, name, cols)?;
    for t in &mut taps {
        for r in &mut t.rows {
            *r = out_row[r];
        }
    }
    g.trilinear(conv, coords_var, taps)
}
