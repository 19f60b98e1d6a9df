use super::GeneratedSequence;
use crate::geom::count_inside;
use crate::math::wrap_angle;
use crate::metrics::{Attribute, Attributes};

/// Accumulated rotation (sum of per-axis absolute changes) above which a sequence is ROT.
pub const ROT_THRESHOLD_DEG: f64 = 10.0;
/// Volume ratio to the first frame outside this range marks SV.
pub const SV_RANGE: (f64, f64) = (0.75, 1.5);
/// A present frame with fewer target points than this marks SPA.
pub const SPA_MIN_POINTS: usize = 50;

/// Derives the challenge attributes from what the generator used.
///
/// Motion rules compare consecutive frames where both are annotated. DEF never fires
/// because every generated target is rigid.
pub fn auto_attributes(seq: &GeneratedSequence) -> Attributes {
    let mut out = Attributes::default();
    let inv = seq.boxes.iter().any(|b| b.is_none()) || seq.partially_occluded.iter().any(|&p| p);
    out.set(Attribute::Inv, inv);

    let mut fm = false;
    let mut rot = 0.0;
    for pair in seq.boxes.windows(2) {
        if let [Some(a), Some(b)] = pair {
            fm |= (b.center() - a.center()).norm() > 0.5 * a.diagonal();
            let d = b.angles() - a.angles();
            rot += d.iter().map(|v| wrap_angle(*v).abs()).sum::<f64>();
        }
    }
    out.set(Attribute::Fm, fm);
    out.set(Attribute::Rot, rot > ROT_THRESHOLD_DEG.to_radians());

    let v0 = seq.poses[0].volume();
    let sv = seq.boxes.iter().flatten().any(|b| {
        let r = b.volume() / v0;
        r < SV_RANGE.0 || r > SV_RANGE.1
    });
    out.set(Attribute::Sv, sv);
    out.set(Attribute::Sd, seq.similar_distractors);

    let spa = seq
        .boxes
        .iter()
        .zip(&seq.clouds)
        .any(|(b, c)| b.is_some_and(|b| count_inside(c.points(), &b) < SPA_MIN_POINTS));
    out.set(Attribute::Spa, spa);
    out.set(Attribute::Def, false);
    out
}
