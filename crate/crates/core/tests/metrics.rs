use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sot3d_core::geom::{iou3d_symmetric, Box9DoF, SymmetryAxis, SymmetrySpec};
use sot3d_core::math::Vec3;
use sot3d_core::metrics::*;
use sot3d_core::Error;

fn bx(x: f64) -> Box9DoF {
    Box9DoF::axis_aligned(Vec3::new(x, 0.0, 0.0), Vec3::repeat(1.0)).unwrap()
}

fn truth(id: &str, cat: &str, boxes: Vec<Option<Box9DoF>>) -> SequenceTruth {
    SequenceTruth {
        id: id.to_string(),
        category: cat.to_string(),
        attributes: Attributes::default(),
        symmetry: SymmetrySpec::none(),
        boxes,
    }
}

fn perfect(gt: &SequenceTruth) -> SequenceResult {
    let predictions = gt
        .boxes
        .iter()
        .enumerate()
        .skip(1)
        .filter_map(|(frame, b)| b.map(|bbox| Prediction { frame, bbox, score: 1.0 }))
        .collect();
    SequenceResult { id: gt.id.clone(), predictions }
}

fn shifted(gt: &SequenceTruth, rng: &mut ChaCha8Rng) -> SequenceResult {
    let mut r = perfect(gt);
    for p in r.predictions.iter_mut() {
        let d = Vec3::from_fn(|_, _| rng.random_range(-0.6..0.6));
        p.bbox = p.bbox.with_center(p.bbox.center() + d).unwrap();
    }
    r
}

fn scored(id: &str, cat: &str, ao: f64) -> SequenceScore {
    SequenceScore {
        id: id.to_string(),
        category: cat.to_string(),
        attributes: Attributes::default(),
        frames: 1,
        scores: Scores { ao, sr50: 0.0, sr75: 0.0 },
    }
}

/// A few sequences over three classes with random attribute bits.
fn corpus(rng: &mut ChaCha8Rng) -> (Vec<SequenceResult>, Vec<SequenceTruth>) {
    let mut gts = Vec::new();
    let mut res = Vec::new();
    for i in 0..9 {
        let frames = rng.random_range(3..8);
        let boxes = (0..frames).map(|f| Some(bx(0.1 * f as f64))).collect();
        let mut gt = truth(&format!("s{i}"), ["car", "cup", "dog"][i % 3], boxes);
        for a in Attribute::ALL {
            gt.attributes.set(a, rng.random_bool(0.5));
        }
        res.push(shifted(&gt, rng));
        gts.push(gt);
    }
    (res, gts)
}

#[test]
fn ao_sr_fixtures() {
    let v = [0.8, 0.6, 0.2];
    assert!((ao(&v).unwrap() - 1.6 / 3.0).abs() < 1e-15);
    assert!((sr(&v, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((sr(&v, 0.75).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(ao(&[1.0, 1.0]).unwrap(), 1.0);
    assert_eq!(sr(&[1.0, 1.0], 0.99).unwrap(), 1.0);
    assert!(matches!(ao(&[]), Err(Error::Protocol(_))));
    assert!(matches!(sr(&[], 0.5), Err(Error::Protocol(_))));
}

#[test]
fn success_threshold_is_strict() {
    assert_eq!(sr(&[0.5], 0.5).unwrap(), 0.0);
}

#[test]
fn perfect_tracker_scores_one() {
    let gt = truth("s", "a", (0..5).map(|i| Some(bx(i as f64 * 0.2))).collect());
    let s = score_sequence(&perfect(&gt), &gt).unwrap();
    assert_eq!(s.scores, Scores { ao: 1.0, sr50: 1.0, sr75: 1.0 });
    assert_eq!(s.frames, 4);
}

#[test]
fn absent_frames_are_skipped() {
    let gt = truth("s", "a", vec![Some(bx(0.0)), Some(bx(0.1)), None, Some(bx(0.3))]);
    assert_eq!(frame_overlaps(&perfect(&gt), &gt).unwrap(), vec![1.0, 1.0]);
}

#[test]
fn overlaps_match_external_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut gt = truth("s", "a", (0..12).map(|i| Some(bx(i as f64 * 0.1))).collect());
    gt.boxes[4] = None;
    gt.symmetry = SymmetrySpec::about(SymmetryAxis::Z);
    let r = shifted(&gt, &mut rng);
    let expected: Vec<f64> = r
        .predictions
        .iter()
        .map(|p| iou3d_symmetric(&p.bbox, gt.boxes[p.frame].as_ref().unwrap(), &gt.symmetry))
        .collect();
    assert_eq!(frame_overlaps(&r, &gt).unwrap(), expected);
}

#[test]
fn missing_extra_and_duplicate_frames() {
    let gt = truth("s", "a", vec![Some(bx(0.0)), Some(bx(0.1)), Some(bx(0.2))]);
    let mut r = perfect(&gt);
    r.predictions.pop();
    let err = frame_overlaps(&r, &gt).unwrap_err();
    assert!(matches!(&err, Error::Protocol(m) if m.contains("frame 2")));
    let mut r = perfect(&gt);
    r.predictions.push(r.predictions[0]);
    assert!(matches!(frame_overlaps(&r, &gt), Err(Error::Protocol(m)) if m.contains("duplicate")));
    let mut r = perfect(&gt);
    r.predictions.push(Prediction { frame: 0, bbox: bx(0.0), score: 1.0 });
    assert!(frame_overlaps(&r, &gt).is_err());
}

#[test]
fn two_class_mean() {
    let s = summarize(&[scored("a1", "A", 0.4), scored("a2", "A", 0.6), scored("b1", "B", 0.9)]).unwrap();
    assert!((s.overall.ao - 0.7).abs() < 1e-12);
    assert_eq!(s.classes.len(), 2);
    assert_eq!(s.classes[0].sequences, 2);
}

#[test]
fn single_sequence_summary_is_that_sequence() {
    let s = summarize(&[scored("x", "A", 0.37)]).unwrap();
    assert_eq!(s.overall.ao, 0.37);
    assert!(summarize(&[]).is_none());
}

#[test]
fn duplicating_a_class_leaves_map_unchanged() {
    let base = vec![scored("a1", "A", 0.4), scored("a2", "A", 0.6), scored("b1", "B", 0.9)];
    let mut dup = base.clone();
    dup.push(scored("a3", "A", 0.4));
    dup.push(scored("a4", "A", 0.6));
    let (x, y) = (summarize(&base).unwrap(), summarize(&dup).unwrap());
    assert!((x.overall.ao - y.overall.ao).abs() < 1e-12);
}

#[test]
fn report_is_order_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut res, gts) = corpus(&mut rng);
    let a = aggregate(&res, &gts).unwrap();
    res.reverse();
    let b = aggregate(&res, &gts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.overall.ao.to_bits(), b.overall.ao.to_bits());
}

#[test]
fn aggregate_rejects_unknown_and_duplicate_ids() {
    let gt = truth("s", "a", vec![Some(bx(0.0)), Some(bx(0.1))]);
    let mut r = perfect(&gt);
    assert!(aggregate(&[r.clone(), r.clone()], std::slice::from_ref(&gt)).is_err());
    r.id = "other".into();
    assert!(aggregate(&[r], &[gt]).is_err());
    assert!(aggregate(&[], &[]).is_err());
}

#[test]
fn attribute_rows_equal_subset_aggregates() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (res, gts) = corpus(&mut rng);
    let rows = attribute_report(&res, &gts).unwrap();
    assert_eq!(rows.len(), 7);
    for (row, a) in rows.iter().zip(Attribute::ALL) {
        assert_eq!(row.attribute, a.label());
        let keep: Vec<usize> = (0..gts.len()).filter(|&i| gts[i].attributes.has(a)).collect();
        assert_eq!(row.sequences, keep.len());
        if keep.is_empty() {
            assert!(row.summary.is_none());
            continue;
        }
        let sub_r: Vec<_> = keep.iter().map(|&i| res[i].clone()).collect();
        let sub_g: Vec<_> = keep.iter().map(|&i| gts[i].clone()).collect();
        let manual = aggregate(&sub_r, &sub_g).unwrap();
        let s = row.summary.as_ref().unwrap();
        assert_eq!(s.overall, manual.overall);
        assert_eq!(s.classes, manual.classes);
    }
}

#[test]
fn shared_attribute_row_equals_global_and_absent_row_is_marked() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (res, mut gts) = corpus(&mut rng);
    for g in gts.iter_mut() {
        g.attributes = Attributes::default();
        g.attributes.set(Attribute::Rot, true);
    }
    let report = aggregate(&res, &gts).unwrap();
    let rot = &report.attributes[Attribute::Rot.index()];
    assert_eq!(rot.summary.as_ref().unwrap().overall, report.overall);
    assert!(report.attributes[Attribute::Def.index()].summary.is_none());
}

#[test]
fn fuzzed_reports_stay_in_range_and_ordered() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let (res, gts) = corpus(&mut rng);
        let r = aggregate(&res, &gts).unwrap();
        let all = std::iter::once(r.overall).chain(r.classes.iter().map(|c| c.scores));
        for s in all {
            assert!(s.sr75 <= s.sr50);
            for v in [s.ao, s.sr50, s.sr75] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        let mean: f64 = r.classes.iter().map(|c| c.scores.ao).sum::<f64>() / r.classes.len() as f64;
        assert!((mean - r.overall.ao).abs() < 1e-12);
    }
}

#[test]
fn singleton_aggregate_reduces_to_sequence_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let gt = truth("s", "a", (0..10).map(|i| Some(bx(i as f64 * 0.1))).collect());
    let r = shifted(&gt, &mut rng);
    let ious = frame_overlaps(&r, &gt).unwrap();
    let rep = aggregate(std::slice::from_ref(&r), std::slice::from_ref(&gt)).unwrap();
    assert_eq!(rep.overall.ao, ao(&ious).unwrap());
    assert_eq!(rep.overall.sr50, sr(&ious, 0.5).unwrap());
    assert_eq!(rep.overall.sr75, sr(&ious, 0.75).unwrap());
}
