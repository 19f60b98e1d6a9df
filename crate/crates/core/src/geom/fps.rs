use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::math::Vec3;

/// Greedy farthest point sampling starting at `start`.
///
/// Each step picks the unselected point whose distance to the selected set is largest;
/// ties go to the lowest index.
pub fn farthest_point_sampling(points: &[Vec3], m: usize, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m == 0 || m > n {
        return Err(invalid!("farthest point sampling needs 1 <= m <= {n}, got m = {m}"));
    }
    if start >= n {
        return Err(invalid!("start index {start} out of range for {n} points"));
    }
    let mut selected = vec![false; n];
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut order = Vec::with_capacity(m);
    let mut current = start;
    loop {
        selected[current] = true;
        order.push(current);
        if order.len() == m {
            break;
        }
        let anchor = points[current];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..n {
            if selected[i] {
                continue;
            }
            let d = (points[i] - anchor).norm_squared();
            if d < min_d2[i] {
                min_d2[i] = d;
            }
            if min_d2[i] > best_d {
                best_d = min_d2[i];
                best = i;
            }
        }
        current = best;
    }
    Ok(order)
}
