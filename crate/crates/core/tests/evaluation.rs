use std::collections::BTreeSet;

use dapnet::evaluation::{
    attribute_breakdown, center_errors, export, overlaps, parse_curve_csv, precision_curve, representative_pr,
    representative_sr, success_curve, success_thresholds, Attribute, EvalConfig, SequenceEval,
};
use dapnet::geometry::BBox;
use proptest::prelude::*;

fn arb_box() -> impl Strategy<Value = BBox> {
    (-100.0..100.0f64, -100.0..100.0f64, 1.0..60.0f64, 1.0..60.0f64).prop_map(|(x, y, w, h)| BBox::new(x, y, w, h).unwrap())
}

fn arb_pairs() -> impl Strategy<Value = Vec<(BBox, BBox)>> {
    prop::collection::vec((arb_box(), arb_box()), 1..30)
}

fn tags(list: &[Attribute]) -> BTreeSet<Attribute> {
    list.iter().copied().collect()
}

#[test]
fn pooled_precision_is_frame_weighted() {
    let gt = vec![BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(); 2];
    let near = BBox::new(1.0, 0.0, 10.0, 10.0).unwrap();
    let far = BBox::new(40.0, 0.0, 10.0, 10.0).unwrap();
    // sequence A: both frames within 20 px; sequence B: one of two
    let a = SequenceEval::new("a", tags(&[Attribute::LI]), &[near, near], &gt).unwrap();
    let b = SequenceEval::new("b", tags(&[Attribute::LI, Attribute::FM]), &[near, far], &gt).unwrap();
    let rows = attribute_breakdown(&[a, b], &EvalConfig::default());
    let get = |l: &str| rows.iter().find(|r| r.label == l).unwrap().scores;
    assert_eq!(get("LI").unwrap().pr, 0.75);
    assert_eq!(get("FM").unwrap().pr, 0.5);
    assert_eq!(get("ALL").unwrap().pr, 0.75);
    assert_eq!(get("ALL").unwrap().frames, 4);
    assert!(get("PO").is_none());
}

#[test]
fn perfect_results_and_threshold_choice() {
    let gt: Vec<BBox> = (0..10).map(|i| BBox::new(i as f64, 2.0, 10.0, 8.0).unwrap()).collect();
    let (curve, sr) = success_curve(&gt, &gt, &success_thresholds()).unwrap();
    assert_eq!(sr, 20.0 / 21.0);
    assert_eq!(curve.values.last(), Some(&0.0));
    let p = precision_curve(&gt, &gt, &[0.0, 5.0]).unwrap();
    assert_eq!(p.values, vec![1.0, 1.0]);

    let res: Vec<BBox> = gt.iter().enumerate().map(|(i, b)| BBox::new(b.x + i as f64, b.y, b.w, b.h).unwrap()).collect();
    let seq = SequenceEval::new("s", BTreeSet::new(), &res, &gt).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let e5 = export(std::slice::from_ref(&seq), &EvalConfig::new(5.0), "full", "synthetic", &tmp.path().join("a")).unwrap();
    let e20 = export(&[seq], &EvalConfig::new(20.0), "full", "synthetic", &tmp.path().join("b")).unwrap();
    let read = |p: &std::path::Path| std::fs::read_to_string(p).unwrap();
    assert_eq!(read(&e5.precision), read(&e20.precision));
    assert_eq!(read(&e5.success), read(&e20.success));
    assert_ne!(read(&e5.summary), read(&e20.summary));
    let curve = parse_curve_csv(&read(&e5.precision), &e5.precision).unwrap();
    assert_eq!(curve.thresholds.len(), 51);
}

proptest! {
    #[test]
    fn curves_are_monotone(pairs in arb_pairs()) {
        let (res, gt): (Vec<BBox>, Vec<BBox>) = pairs.into_iter().unzip();
        let cfg = EvalConfig::default();
        let p = precision_curve(&res, &gt, &cfg.pr_thresholds).unwrap();
        prop_assert!(p.values.windows(2).all(|w| w[0] <= w[1]));
        let (s, _) = success_curve(&res, &gt, &cfg.sr_thresholds).unwrap();
        prop_assert!(s.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn curves_ignore_joint_translation(pairs in arb_pairs(), dx in -300.0..300.0f64, dy in -300.0..300.0f64) {
        let (res, gt): (Vec<BBox>, Vec<BBox>) = pairs.into_iter().unzip();
        let shift = |v: &[BBox]| v.iter().map(|b| b.translated(dx, dy)).collect::<Vec<_>>();
        let cfg = EvalConfig::default();
        let e0 = center_errors(&res, &gt).unwrap();
        let e1 = center_errors(&shift(&res), &shift(&gt)).unwrap();
        let o0 = overlaps(&res, &gt).unwrap();
        let o1 = overlaps(&shift(&res), &shift(&gt)).unwrap();
        for (a, b) in e0.iter().zip(&e1) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in o0.iter().zip(&o1) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        // floating-point noise can move at most a frame across a threshold
        prop_assert!((representative_pr(&e0, cfg.pr_threshold) - representative_pr(&e1, cfg.pr_threshold)).abs() <= 1.0 / e0.len() as f64);
        prop_assert!((representative_sr(&o0, &cfg.sr_thresholds) - representative_sr(&o1, &cfg.sr_thresholds)).abs() <= 1.0 / o0.len() as f64);
    }

    #[test]
    fn all_row_equals_concatenation(a in arb_pairs(), b in arb_pairs()) {
        let cfg = EvalConfig::default();
        let (ra, ga): (Vec<BBox>, Vec<BBox>) = a.into_iter().unzip();
        let (rb, gb): (Vec<BBox>, Vec<BBox>) = b.into_iter().unzip();
        let sa = SequenceEval::new("a", tags(&[Attribute::SV]), &ra, &ga).unwrap();
        let sb = SequenceEval::new("b", BTreeSet::new(), &rb, &gb).unwrap();
        let rows = attribute_breakdown(&[sa, sb], &cfg);
        let all = rows.last().unwrap().scores.unwrap();
        let res: Vec<BBox> = ra.iter().chain(&rb).copied().collect();
        let gt: Vec<BBox> = ga.iter().chain(&gb).copied().collect();
        prop_assert_eq!(all.pr, representative_pr(&center_errors(&res, &gt).unwrap(), cfg.pr_threshold));
        prop_assert_eq!(all.sr, representative_sr(&overlaps(&res, &gt).unwrap(), &cfg.sr_thresholds));
    }
}
