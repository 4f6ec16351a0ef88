//! Stochastic box generation: IoU-gated training samples and Gaussian
//! tracking candidates.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{DapError, Result};
use crate::geometry::{box_to_state, iou, state_to_box, BBox, TargetState, DEFAULT_SCALE_STEP};
use crate::head::ScorePair;

/// Proposal budget of one [`draw_training_samples`] call.
pub const PROPOSAL_BUDGET: usize = 100_000;

/// Counts, IoU gates and jitter of positive/negative sample generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    pub n_pos: usize,
    pub n_neg: usize,
    pub pos_iou_min: f64,
    pub neg_iou_max: f64,
    /// Positive centre jitter, in units of r = (w + h) / 2.
    pub pos_trans_std: f64,
    /// Positive size jitter, standard deviation of the natural-log scale.
    pub pos_log_scale_std: f64,
    /// Negative centre jitter around the target, in units of r.
    pub neg_trans_std: f64,
    pub neg_log_scale_std: f64,
    /// Fraction of negative proposals centred uniformly over the image.
    pub neg_whole_fraction: f64,
    /// Smallest proposal side, in pixels.
    pub min_size: f64,
    pub budget: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            n_pos: 32,
            n_neg: 96,
            pos_iou_min: 0.7,
            neg_iou_max: 0.5,
            pos_trans_std: 0.1,
            pos_log_scale_std: 0.05,
            neg_trans_std: 1.0,
            neg_log_scale_std: 0.3,
            neg_whole_fraction: 0.5,
            min_size: 10.0,
            budget: PROPOSAL_BUDGET,
        }
    }
}

impl SampleSpec {
    pub fn with_counts(n_pos: usize, n_neg: usize) -> Self {
        SampleSpec {
            n_pos,
            n_neg,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pos_iou_min > self.neg_iou_max) {
            return Err(DapError::Config(format!(
                "pos_iou_min {} must exceed neg_iou_max {}",
                self.pos_iou_min, self.neg_iou_max
            )));
        }
        Ok(())
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Moves and shrinks `b` so it lies inside the image with sides of at
/// least `min_size` (or the image side, when smaller).
pub fn fit_inside(b: &BBox, width: f64, height: f64, min_size: f64) -> BBox {
    let w = b.w.clamp(min_size.min(width), width);
    let h = b.h.clamp(min_size.min(height), height);
    let (cx, cy) = b.center();
    let x = (cx - w / 2.0).clamp(0.0, width - w);
    let y = (cy - h / 2.0).clamp(0.0, height - h);
    BBox { x, y, w, h }
}

/// Draws `spec.n_pos` boxes with IoU >= `pos_iou_min` and `spec.n_neg`
/// boxes with IoU < `neg_iou_max` against `gt`. Proposals falling into
/// the gap between the two gates are discarded.
pub fn draw_training_samples<R: Rng + ?Sized>(
    gt: &BBox,
    image_w: usize,
    image_h: usize,
    spec: &SampleSpec,
    rng: &mut R,
) -> Result<(Vec<BBox>, Vec<BBox>)> {
    spec.validate()?;
    let (iw, ih) = (image_w as f64, image_h as f64);
    let r = (gt.w + gt.h) / 2.0;
    let (gcx, gcy) = gt.center();
    let mut pos = Vec::with_capacity(spec.n_pos);
    let mut neg = Vec::with_capacity(spec.n_neg);
    let mut proposals = 0;
    while pos.len() < spec.n_pos || neg.len() < spec.n_neg {
        if proposals >= spec.budget {
            return Err(DapError::SamplingExhausted {
                proposals,
                found_pos: pos.len(),
                found_neg: neg.len(),
            });
        }
        proposals += 1;
        let want_pos = pos.len() < spec.n_pos && (neg.len() >= spec.n_neg || proposals % 2 == 1);
        let cand = if want_pos {
            let k = (spec.pos_log_scale_std * normal(rng)).exp();
            let cx = gcx + spec.pos_trans_std * r * normal(rng);
            let cy = gcy + spec.pos_trans_std * r * normal(rng);
            BBox {
                x: cx - gt.w * k / 2.0,
                y: cy - gt.h * k / 2.0,
                w: gt.w * k,
                h: gt.h * k,
            }
        } else {
            let k = (spec.neg_log_scale_std * normal(rng)).exp();
            let (cx, cy) = if rng.random::<f64>() < spec.neg_whole_fraction {
                (rng.random::<f64>() * iw, rng.random::<f64>() * ih)
            } else {
                (
                    gcx + spec.neg_trans_std * r * normal(rng),
                    gcy + spec.neg_trans_std * r * normal(rng),
                )
            };
            BBox {
                x: cx - gt.w * k / 2.0,
                y: cy - gt.h * k / 2.0,
                w: gt.w * k,
                h: gt.h * k,
            }
        };
        let cand = fit_inside(&cand, iw, ih, spec.min_size);
        let overlap = iou(&cand, gt);
        if want_pos && overlap >= spec.pos_iou_min {
            pos.push(cand);
        } else if !want_pos && overlap < spec.neg_iou_max {
            neg.push(cand);
        }
    }
    Ok((pos, neg))
}

/// Parameters of the Gaussian candidate distribution around the previous state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateSpec {
    pub n_cand: usize,
    /// Standard deviation of the centre, in units of r (0.3 -> variance 0.09 r^2).
    pub trans_std: f64,
    /// Standard deviation of the scale coordinate (0.5 -> variance 0.25).
    pub scale_std: f64,
    pub gamma: f64,
    /// Make candidate 0 the previous state itself.
    pub include_prev: bool,
    pub min_size: f64,
}

impl Default for CandidateSpec {
    fn default() -> Self {
        CandidateSpec {
            n_cand: 256,
            trans_std: 0.3,
            scale_std: 0.5,
            gamma: DEFAULT_SCALE_STEP,
            include_prev: false,
            min_size: 10.0,
        }
    }
}

/// Reference geometry of a tracked target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetFrame {
    pub ref_w: f64,
    pub ref_h: f64,
    pub image_w: f64,
    pub image_h: f64,
}

impl TargetFrame {
    fn min_side(&self, spec_min: f64) -> f64 {
        spec_min.min(self.ref_w).min(self.ref_h)
    }

    /// Limits the state so its box fits the image and keeps sides of at
    /// least the minimum size.
    pub fn clamp_state(&self, st: &TargetState, gamma: f64, min_size: f64) -> TargetState {
        let lg = gamma.ln();
        let min_side = self.min_side(min_size);
        let s_min = (min_side / self.ref_w).max(min_side / self.ref_h).ln() / lg;
        let s_max = (self.image_w / self.ref_w).min(self.image_h / self.ref_h).ln() / lg;
        let s = st.s.clamp(s_min.min(s_max), s_max);
        let k = gamma.powf(s);
        let (w, h) = (self.ref_w * k, self.ref_h * k);
        TargetState {
            a: st.a.clamp(w / 2.0, (self.image_w - w / 2.0).max(w / 2.0)),
            b: st.b.clamp(h / 2.0, (self.image_h - h / 2.0).max(h / 2.0)),
            s,
        }
    }

    pub fn state_box(&self, st: &TargetState, gamma: f64) -> BBox {
        state_to_box(st, self.ref_w, self.ref_h, gamma)
    }

    pub fn box_state(&self, b: &BBox, gamma: f64) -> TargetState {
        box_to_state(b, self.ref_w, self.ref_h, gamma)
    }
}

/// Candidate states with their boxes and, after scoring, their scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub states: Vec<TargetState>,
    pub boxes: Vec<BBox>,
    pub scores: Option<Vec<ScorePair>>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Draws candidates `(a, b, s) ~ N(prev, diag(t^2 r^2, t^2 r^2, sigma_s^2))`
/// with `r = (w + h) / 2` of the previous box; every candidate is clamped
/// into the image.
pub fn gaussian_candidates<R: Rng + ?Sized>(
    prev: &TargetState,
    frame: &TargetFrame,
    spec: &CandidateSpec,
    rng: &mut R,
) -> CandidateSet {
    let prev_box = frame.state_box(prev, spec.gamma);
    let r = (prev_box.w + prev_box.h) / 2.0;
    let mut states = Vec::with_capacity(spec.n_cand);
    for i in 0..spec.n_cand {
        let raw = if i == 0 && spec.include_prev {
            *prev
        } else {
            TargetState {
                a: prev.a + spec.trans_std * r * normal(rng),
                b: prev.b + spec.trans_std * r * normal(rng),
                s: prev.s + spec.scale_std * normal(rng),
            }
        };
        states.push(frame.clamp_state(&raw, spec.gamma, spec.min_size));
    }
    let boxes = states.iter().map(|s| frame.state_box(s, spec.gamma)).collect();
    CandidateSet {
        states,
        boxes,
        scores: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn training_samples_respect_gates() {
        let gt = BBox::new(40.0, 30.0, 24.0, 18.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = SampleSpec::default();
        for _ in 0..8 {
            let (pos, neg) = draw_training_samples(&gt, 128, 96, &spec, &mut rng).unwrap();
            assert_eq!(pos.len(), 32);
            assert_eq!(neg.len(), 96);
            assert!(pos.iter().all(|p| iou(p, &gt) >= 0.7));
            assert!(neg.iter().all(|n| iou(n, &gt) < 0.5));
            assert!(pos.iter().chain(&neg).all(|b| b.inside_image(128.0, 96.0)));
        }
    }

    #[test]
    fn training_samples_deterministic() {
        let gt = BBox::new(10.0, 10.0, 20.0, 20.0).unwrap();
        let spec = SampleSpec::with_counts(5, 7);
        let a = draw_training_samples(&gt, 64, 64, &spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = draw_training_samples(&gt, 64, 64, &spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_image_exhausts_budget() {
        // any box of side >= 10 inside a 12x12 image overlaps this gt by more than 0.5
        let gt = BBox::new(0.0, 0.0, 11.0, 11.0).unwrap();
        let spec = SampleSpec::default();
        let err = draw_training_samples(&gt, 12, 12, &spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, DapError::SamplingExhausted { proposals: PROPOSAL_BUDGET, .. }));
    }

    fn frame() -> TargetFrame {
        TargetFrame {
            ref_w: 30.0,
            ref_h: 20.0,
            image_w: 10_000.0,
            image_h: 10_000.0,
        }
    }

    #[test]
    fn zero_covariance_repeats_prev() {
        let prev = TargetState::new(5000.0, 4000.0, 0.3);
        let spec = CandidateSpec {
            trans_std: 0.0,
            scale_std: 0.0,
            n_cand: 16,
            ..CandidateSpec::default()
        };
        let set = gaussian_candidates(&prev, &frame(), &spec, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(set.len(), 16);
        assert!(set.states.iter().all(|s| *s == prev));
    }

    #[test]
    fn include_prev_pins_first_candidate() {
        let prev = TargetState::new(300.0, 200.0, -0.5);
        let spec = CandidateSpec {
            include_prev: true,
            n_cand: 8,
            ..CandidateSpec::default()
        };
        let set = gaussian_candidates(&prev, &frame(), &spec, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(set.states[0], prev);
        assert_ne!(set.states[1], prev);
    }

    #[test]
    fn candidates_stay_inside_small_image() {
        let f = TargetFrame {
            ref_w: 20.0,
            ref_h: 16.0,
            image_w: 64.0,
            image_h: 48.0,
        };
        let prev = TargetState::new(5.0, 40.0, 0.0);
        let set = gaussian_candidates(&prev, &f, &CandidateSpec::default(), &mut ChaCha8Rng::seed_from_u64(8));
        for b in &set.boxes {
            assert!(b.x >= -1e-9 && b.y >= -1e-9 && b.right() <= 64.0 + 1e-9 && b.bottom() <= 48.0 + 1e-9);
            assert!(b.w >= 2.0 && b.h >= 2.0);
        }
    }
}
