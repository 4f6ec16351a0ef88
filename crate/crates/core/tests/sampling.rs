use dapnet::geometry::{iou, BBox, TargetState};
use dapnet::pruning::{wrs_select, PruningConfig};
use dapnet::sampling::{draw_training_samples, gaussian_candidates, CandidateSpec, SampleSpec, TargetFrame};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

#[test]
fn candidate_moments_match_covariance() {
    // a huge image so that clamping never engages
    let frame = TargetFrame {
        ref_w: 40.0,
        ref_h: 30.0,
        image_w: 1e5,
        image_h: 1e5,
    };
    let prev = TargetState::new(5e4, 5e4, 0.0);
    let spec = CandidateSpec {
        n_cand: 100_000,
        ..CandidateSpec::default()
    };
    let set = gaussian_candidates(&prev, &frame, &spec, &mut ChaCha8Rng::seed_from_u64(5));
    let r = (40.0 + 30.0) / 2.0;
    let a: Vec<f64> = set.states.iter().map(|s| s.a).collect();
    let b: Vec<f64> = set.states.iter().map(|s| s.b).collect();
    let s: Vec<f64> = set.states.iter().map(|s| s.s).collect();
    let (ma, sa) = mean_std(&a);
    let (mb, sb) = mean_std(&b);
    let (_, ss) = mean_std(&s);
    assert!((ma - 5e4).abs() < 0.01 * 0.3 * r, "mean a {ma}");
    assert!((mb - 5e4).abs() < 0.01 * 0.3 * r, "mean b {mb}");
    assert!((sa / (0.3 * r) - 1.0).abs() < 0.02, "std a {sa}");
    assert!((sb / (0.3 * r) - 1.0).abs() < 0.02, "std b {sb}");
    assert!((ss / 0.5 - 1.0).abs() < 0.02, "std s {ss}");
}

#[test]
fn wrs_frequency_is_monotone_in_score() {
    let scores = [0.5, 1.0, 2.0, 4.0, 0.25];
    let cfg = PruningConfig::new(0.4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let trials = 20_000;
    let mut counts = [0usize; 5];
    for _ in 0..trials {
        for c in wrs_select(&scores, &cfg, &mut rng).unwrap().selected {
            counts[c] += 1;
        }
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / trials as f64).collect();
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    for w in order.windows(2) {
        assert!(freq[w[1]] + 0.01 >= freq[w[0]], "{freq:?}");
    }
    assert!(freq[3] > freq[2] && freq[2] > freq[1], "{freq:?}");
}

#[test]
fn wrs_two_channel_probability() {
    // P(channel 0 first) for weights 2 and 1 is 2/3
    let cfg = PruningConfig::new(0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = 100_000;
    let hits = (0..trials)
        .filter(|_| wrs_select(&[2.0, 1.0], &cfg, &mut rng).unwrap().selected == [0])
        .count();
    assert!((hits as f64 / trials as f64 - 2.0 / 3.0).abs() < 0.01);
}

fn arb_target() -> impl Strategy<Value = (BBox, usize, usize)> {
    (64usize..200, 64usize..200, 12.0..40.0f64, 12.0..40.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(iw, ih, w, h, fx, fy)| {
        let x = fx * (iw as f64 - w);
        let y = fy * (ih as f64 - h);
        (BBox::new(x, y, w, h).unwrap(), iw, ih)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn training_samples_leave_the_gap_empty((gt, iw, ih) in arb_target(), seed in 0u64..1000) {
        let spec = SampleSpec::with_counts(16, 48);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (pos, neg) = draw_training_samples(&gt, iw, ih, &spec, &mut rng).unwrap();
        prop_assert_eq!(pos.len(), 16);
        prop_assert_eq!(neg.len(), 48);
        for b in &pos {
            prop_assert!(iou(b, &gt) >= 0.7);
        }
        for b in &neg {
            prop_assert!(iou(b, &gt) < 0.5);
        }
        for b in pos.iter().chain(&neg) {
            prop_assert!(b.inside_image(iw as f64, ih as f64));
        }
    }

    #[test]
    fn sampling_is_a_function_of_the_seed((gt, iw, ih) in arb_target(), seed in 0u64..1000) {
        let spec = SampleSpec::with_counts(4, 8);
        let a = draw_training_samples(&gt, iw, ih, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = draw_training_samples(&gt, iw, ih, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a, b);
        let frame = TargetFrame { ref_w: gt.w, ref_h: gt.h, image_w: iw as f64, image_h: ih as f64 };
        let prev = frame.box_state(&gt, 1.05);
        let spec = CandidateSpec { n_cand: 16, include_prev: true, ..CandidateSpec::default() };
        let c1 = gaussian_candidates(&prev, &frame, &spec, &mut ChaCha8Rng::seed_from_u64(seed));
        let c2 = gaussian_candidates(&prev, &frame, &spec, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&c1, &c2);
        prop_assert_eq!(c1.states[0], prev);
    }

    #[test]
    fn wrs_keeps_floor_of_ratio(scores in prop::collection::vec(0.01..10.0f64, 1..80), ratio in 0.05..1.0f64, seed in 0u64..100) {
        let cfg = PruningConfig::new(ratio).unwrap();
        let m = (scores.len() as f64 * ratio).floor() as usize;
        prop_assume!(m >= 1);
        let sel = wrs_select(&scores, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(sel.selected.len(), m);
        prop_assert!(sel.selected.windows(2).all(|w| w[0] < w[1]));
    }
}
