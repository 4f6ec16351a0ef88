//! Boxes, target states and the overlap/distance measures shared by
//! sampling, tracking and evaluation.

use ndarray::Array3;

use crate::error::{DapError, Result};

/// Scale step between adjacent integer values of [`TargetState::s`].
pub const DEFAULT_SCALE_STEP: f64 = 1.05;

/// Rank-3 feature tensor laid out as (channels, height, width).
pub type FeatureMap<T> = Array3<T>;

/// Axis-aligned rectangle in continuous pixel coordinates, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BBox { x, y, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(DapError::InvalidBox { x, y, w, h })
        }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    /// Area of the intersection with the `[0, width] x [0, height]` image rectangle.
    pub fn overlap_with_image(&self, width: f64, height: f64) -> f64 {
        let iw = self.right().min(width) - self.x.max(0.0);
        let ih = self.bottom().min(height) - self.y.max(0.0);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// True when the box lies fully within the image rectangle.
    pub fn inside_image(&self, width: f64, height: f64) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.right() <= width && self.bottom() <= height
    }
}

/// Intersection over union of two boxes.
///
/// Areas are taken from edge differences so that `iou(a, a)` is exactly 1.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = (a.x, a.y, a.right(), a.bottom());
    let (bx1, by1, bx2, by2) = (b.x, b.y, b.right(), b.bottom());
    let iw = ax2.min(bx2) - ax1.max(bx1);
    let ih = ay2.min(by2) - ay1.max(by1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let area_a = (ax2 - ax1) * (ay2 - ay1);
    let area_b = (bx2 - bx1) * (by2 - by1);
    let ratio = inter / (area_a + area_b - inter);
    ratio.clamp(0.0, 1.0)
}

/// Euclidean distance between box centers.
pub fn center_distance(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// Target state: center position plus a log-scale coordinate.
///
/// `s = 0` is the reference size; the box dimensions are `ref * gamma^s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub a: f64,
    pub b: f64,
    pub s: f64,
}

impl TargetState {
    pub fn new(a: f64, b: f64, s: f64) -> Self {
        TargetState { a, b, s }
    }
}

pub fn state_to_box(state: &TargetState, ref_w: f64, ref_h: f64, gamma: f64) -> BBox {
    debug_assert!(gamma > 1.0);
    let k = gamma.powf(state.s);
    let (w, h) = (ref_w * k, ref_h * k);
    BBox {
        x: state.a - w / 2.0,
        y: state.b - h / 2.0,
        w,
        h,
    }
}

/// Inverse of [`state_to_box`]; the scale is the geometric mean of the two
/// axis ratios, so it is exact whenever the box keeps the reference aspect.
pub fn box_to_state(bbox: &BBox, ref_w: f64, ref_h: f64, gamma: f64) -> TargetState {
    let (a, b) = bbox.center();
    let ratio = ((bbox.w / ref_w) * (bbox.h / ref_h)).sqrt();
    TargetState {
        a,
        b,
        s: ratio.ln() / gamma.ln(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(20.0, 20.0, 5.0, 5.0)), 0.0);
        // inter 50, union 150
        assert_relative_eq!(iou(&a, &bb(5.0, 0.0, 10.0, 10.0)), 1.0 / 3.0, epsilon = 1e-15);
        // touching edges count as disjoint
        assert_eq!(iou(&a, &bb(10.0, 0.0, 10.0, 10.0)), 0.0);
    }

    #[test]
    fn center_distance_examples() {
        let a = bb(0.0, 0.0, 4.0, 4.0);
        assert_eq!(center_distance(&a, &a), 0.0);
        let b = bb(-1.0, -1.0, 2.0, 2.0);
        let c = bb(2.0, 3.0, 2.0, 2.0);
        assert_eq!(center_distance(&b, &c), 5.0);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn state_to_box_scales() {
        let st = TargetState::new(50.0, 40.0, 0.0);
        let b = state_to_box(&st, 20.0, 10.0, 1.05);
        assert_eq!(b, bb(40.0, 35.0, 20.0, 10.0));

        let up = state_to_box(&TargetState { s: 1.0, ..st }, 20.0, 10.0, 1.05);
        assert_relative_eq!(up.w, 21.0, epsilon = 1e-12);
        assert_relative_eq!(up.h, 10.5, epsilon = 1e-12);
        assert_eq!(up.center(), (50.0, 40.0));

        let down = state_to_box(&TargetState { s: -1.0, ..st }, 20.0, 10.0, 1.05);
        assert_relative_eq!(down.w, 20.0 / 1.05, epsilon = 1e-12);
        assert_relative_eq!(down.h, 10.0 / 1.05, epsilon = 1e-12);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-100.0..100.0f64, -100.0..100.0f64, 0.5..60.0f64, 0.5..60.0f64)
            .prop_map(|(x, y, w, h)| BBox { x, y, w, h })
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn iou_translation_invariant(a in arb_box(), b in arb_box(), dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
            let before = iou(&a, &b);
            let after = iou(&a.translated(dx, dy), &b.translated(dx, dy));
            prop_assert!((before - after).abs() < 1e-9);
        }

        #[test]
        fn center_distance_matches_manual(a in arb_box(), b in arb_box()) {
            let (acx, acy) = (a.x + 0.5 * a.w, a.y + 0.5 * a.h);
            let (bcx, bcy) = (b.x + 0.5 * b.w, b.y + 0.5 * b.h);
            let manual = ((acx - bcx).powi(2) + (acy - bcy).powi(2)).sqrt();
            prop_assert!((center_distance(&a, &b) - manual).abs() <= 1e-9 * (1.0 + manual));
        }

        #[test]
        fn state_box_round_trip(a in -500.0..500.0f64, b in -500.0..500.0f64, s in -20.0..20.0f64,
                                rw in 1.0..200.0f64, rh in 1.0..200.0f64) {
            let st = TargetState::new(a, b, s);
            let back = box_to_state(&state_to_box(&st, rw, rh, 1.05), rw, rh, 1.05);
            prop_assert!((back.a - a).abs() <= 1e-9 * a.abs().max(1.0));
            prop_assert!((back.b - b).abs() <= 1e-9 * b.abs().max(1.0));
            prop_assert!((back.s - s).abs() <= 1e-9 * s.abs().max(1.0));
        }
    }
}
