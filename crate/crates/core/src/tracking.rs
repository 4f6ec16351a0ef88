//! Online tracking by detection.
//!
//! The offline fc6 branches are replaced by one fresh branch trained on the
//! first frame. Each following frame scores Gaussian candidates around the
//! previous state and keeps the best one. fc4-fc6 are fine-tuned online
//! from stored features while the convolutional layers stay frozen.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::RGBTSequence;
use crate::error::{DapError, Result};
use crate::geometry::{BBox, TargetState, DEFAULT_SCALE_STEP};
use crate::head::{loss_grad, Label};
use crate::image::{FramePair, Image};
use crate::model::{ModelParams, ParamKind};
use crate::real::Real;
use crate::sampling::{draw_training_samples, gaussian_candidates, CandidateSpec, SampleSpec, TargetFrame};
use crate::training::Sgd;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub n_cand: usize,
    /// Candidate centre standard deviation in units of r = (w + h) / 2.
    pub trans_std: f64,
    /// Candidate scale-coordinate standard deviation.
    pub scale_std: f64,
    pub scale_step: f64,
    /// Candidate 0 is the previous state itself.
    pub include_prev: bool,
    pub min_size: f64,
    pub init_pos: usize,
    pub init_neg: usize,
    pub init_iters: usize,
    pub update_iters: usize,
    pub lr_fc45: f64,
    pub lr_fc6: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub clip_gradient: f64,
    /// Mini-batch of the head updates; 0 means all stored samples.
    pub batch_pos: usize,
    pub batch_neg: usize,
    pub harvest_pos: usize,
    pub harvest_neg: usize,
    /// Frames between regular (long-term) updates.
    pub long_interval: usize,
    /// Positives of the last `long_window` frames feed a long-term update.
    pub long_window: usize,
    /// Positives of a short-term update and every negative come from the
    /// last `short_window` frames.
    pub short_window: usize,
    /// A winner scoring above this is reliable: it is regressed and its
    /// frame is harvested; at or below it triggers a short-term update.
    pub reliability: f64,
    pub ridge_lambda: f64,
    pub regression: bool,
    /// Feed zero thermal patches (input ablation).
    pub zero_thermal: bool,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            n_cand: 256,
            trans_std: 0.3,
            scale_std: 0.5,
            scale_step: DEFAULT_SCALE_STEP,
            include_prev: false,
            min_size: 10.0,
            init_pos: 500,
            init_neg: 5000,
            init_iters: 10,
            update_iters: 10,
            lr_fc45: 1e-4,
            lr_fc6: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            clip_gradient: 100.0,
            batch_pos: 32,
            batch_neg: 96,
            harvest_pos: 50,
            harvest_neg: 200,
            long_interval: 10,
            long_window: 100,
            short_window: 20,
            reliability: 0.5,
            ridge_lambda: 1000.0,
            regression: true,
            zero_thermal: false,
            seed: 0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DapError::Config(m.to_string()));
        if self.n_cand == 0 {
            return bad("n_cand must be at least 1");
        }
        if self.init_pos == 0 || self.init_neg == 0 {
            return bad("first-frame training needs positives and negatives");
        }
        if !(self.scale_step > 1.0) || !(self.ridge_lambda > 0.0) {
            return bad("scale_step must exceed 1 and ridge_lambda must be positive");
        }
        if self.long_window == 0 || self.short_window == 0 || self.long_interval == 0 {
            return bad("update windows and interval must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) || self.lr_fc45 < 0.0 || self.lr_fc6 < 0.0 {
            return bad("momentum or learning rate out of range");
        }
        Ok(())
    }

    fn candidate_spec(&self) -> CandidateSpec {
        CandidateSpec {
            n_cand: self.n_cand,
            trans_std: self.trans_std,
            scale_std: self.scale_std,
            gamma: self.scale_step,
            include_prev: self.include_prev,
            min_size: self.min_size,
        }
    }
}

/// Offsets `(dx, dy, dlogw, dlogh)` that move `sample` onto `target`.
pub fn regression_targets(sample: &BBox, target: &BBox) -> [f64; 4] {
    let (sx, sy) = sample.center();
    let (tx, ty) = target.center();
    [
        (tx - sx) / sample.w,
        (ty - sy) / sample.h,
        (target.w / sample.w).ln(),
        (target.h / sample.h).ln(),
    ]
}

/// Centre moves by `(dx * w, dy * h)`, size scales by `exp(dlogw), exp(dlogh)`.
pub fn apply_offsets(bbox: &BBox, d: [f64; 4]) -> BBox {
    let (cx, cy) = bbox.center();
    let (cx, cy) = (cx + d[0] * bbox.w, cy + d[1] * bbox.h);
    let (w, h) = (bbox.w * d[2].exp(), bbox.h * d[3].exp());
    BBox {
        x: cx - w / 2.0,
        y: cy - h / 2.0,
        w,
        h,
    }
}

/// Ridge regression from features to box offsets, with an unpenalized
/// intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct BBoxRegressor {
    /// (features, 4)
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub lambda: f64,
}

impl BBoxRegressor {
    /// Solves `min |Xc W - Yc|^2 + lambda |W|^2` on centred data, in the
    /// primal or the dual form, whichever system is smaller.
    pub fn fit(features: ArrayView2<f64>, targets: ArrayView2<f64>, lambda: f64) -> Result<Self> {
        let (n, d) = features.dim();
        if targets.nrows() != n || targets.ncols() != 4 || n == 0 {
            return Err(DapError::SizeMismatch {
                expected: vec![n, 4],
                actual: targets.shape().to_vec(),
            });
        }
        let x = DMatrix::from_fn(n, d, |i, j| features[[i, j]]);
        let y = DMatrix::from_fn(n, 4, |i, j| targets[[i, j]]);
        let x_mean = x.row_mean();
        let y_mean = y.row_mean();
        let mut xc = x;
        for mut row in xc.row_iter_mut() {
            row -= &x_mean;
        }
        let mut yc = y;
        for mut row in yc.row_iter_mut() {
            row -= &y_mean;
        }
        let singular = || DapError::Config("ridge system is not positive definite".into());
        let weights = if d <= n {
            let mut a = xc.tr_mul(&xc);
            for i in 0..d {
                a[(i, i)] += lambda;
            }
            a.cholesky().ok_or_else(singular)?.solve(&xc.tr_mul(&yc))
        } else {
            let mut k = &xc * xc.transpose();
            for i in 0..n {
                k[(i, i)] += lambda;
            }
            let alpha = k.cholesky().ok_or_else(singular)?.solve(&yc);
            xc.tr_mul(&alpha)
        };
        let bias = (y_mean - x_mean * &weights).transpose();
        Ok(BBoxRegressor { weights, bias, lambda })
    }

    pub fn predict(&self, feature: ArrayView1<f64>) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.bias[k] + feature.iter().zip(self.weights.column(k).iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        out
    }

    pub fn apply(&self, feature: ArrayView1<f64>, bbox: &BBox) -> BBox {
        apply_offsets(bbox, self.predict(feature))
    }
}

/// Features harvested on one frame.
#[derive(Debug, Clone)]
struct Stored<T> {
    frame: usize,
    features: Array2<T>,
}

/// Recent positive and negative features, tagged with their frame.
#[derive(Debug, Clone, Default)]
pub struct SampleStore<T> {
    positives: VecDeque<Stored<T>>,
    negatives: VecDeque<Stored<T>>,
}

impl<T: Real> SampleStore<T> {
    pub fn new() -> Self {
        SampleStore {
            positives: VecDeque::new(),
            negatives: VecDeque::new(),
        }
    }

    pub fn push(&mut self, frame: usize, positives: Array2<T>, negatives: Array2<T>) {
        self.positives.push_back(Stored {
            frame,
            features: positives,
        });
        self.negatives.push_back(Stored {
            frame,
            features: negatives,
        });
    }

    /// Drops positives from `long_window` or more frames ago and
    /// negatives from `short_window` or more frames ago.
    pub fn evict(&mut self, current: usize, long_window: usize, short_window: usize) {
        while self.positives.front().is_some_and(|s| current - s.frame >= long_window) {
            self.positives.pop_front();
        }
        while self.negatives.front().is_some_and(|s| current - s.frame >= short_window) {
            self.negatives.pop_front();
        }
    }

    fn gather(items: &VecDeque<Stored<T>>, current: usize, window: usize) -> Option<Array2<T>> {
        let views: Vec<_> = items
            .iter()
            .filter(|s| current - s.frame < window && s.features.nrows() > 0)
            .map(|s| s.features.view())
            .collect();
        if views.is_empty() {
            None
        } else {
            Some(concatenate(Axis(0), &views).expect("equal feature lengths"))
        }
    }

    pub fn positives_within(&self, current: usize, window: usize) -> Option<Array2<T>> {
        Self::gather(&self.positives, current, window)
    }

    pub fn negatives_within(&self, current: usize, window: usize) -> Option<Array2<T>> {
        Self::gather(&self.negatives, current, window)
    }

    /// Frame index of the oldest stored positive.
    pub fn oldest_positive(&self) -> Option<usize> {
        self.positives.front().map(|s| s.frame)
    }

    pub fn positive_frames(&self) -> Vec<usize> {
        self.positives.iter().map(|s| s.frame).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    Short,
    Long,
}

/// Outcome of one tracked frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub frame: usize,
    pub bbox: BBox,
    /// Unregressed winning candidate.
    pub winner: BBox,
    pub f_plus: f64,
    pub regressed: bool,
    pub update: Option<UpdateKind>,
}

/// Index of the largest score; the first one wins ties.
pub fn select_winner(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

pub struct Tracker<T> {
    model: ModelParams<T>,
    buffers: ModelParams<T>,
    config: TrackerConfig,
    rng: ChaCha8Rng,
    frame: TargetFrame,
    prev: TargetState,
    store: SampleStore<T>,
    regressor: Option<BBoxRegressor>,
    current: usize,
}

impl<T: Real> Tracker<T> {
    /// First-frame initialization: fresh fc6 branch, head training on
    /// samples around `gt`, and the box regressor fit.
    pub fn init(pretrained: &ModelParams<T>, rgb: &Image, thermal: &Image, gt: &BBox, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        if !gt.is_valid() || gt.overlap_with_image(rgb.width as f64, rgb.height as f64) <= 0.0 {
            return Err(DapError::OutOfImage(gt.as_array()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut model = pretrained.clone();
        model.reset_branches(1, &mut rng);
        let frame = TargetFrame {
            ref_w: gt.w,
            ref_h: gt.h,
            image_w: rgb.width as f64,
            image_h: rgb.height as f64,
        };
        let mut tracker = Tracker {
            buffers: model.zeros_like(),
            model,
            prev: frame.box_state(gt, config.scale_step),
            frame,
            config,
            rng,
            store: SampleStore::new(),
            regressor: None,
            current: 0,
        };
        let pair = FramePair::new(rgb, thermal);
        let spec = SampleSpec {
            min_size: tracker.config.min_size,
            ..SampleSpec::with_counts(tracker.config.init_pos, tracker.config.init_neg)
        };
        let (pos_boxes, neg_boxes) = draw_training_samples(gt, rgb.width, rgb.height, &spec, &mut tracker.rng)?;
        let pos = tracker.features(&pair, &pos_boxes)?;
        let neg = tracker.features(&pair, &neg_boxes)?;
        tracker.train_head(&pos, &neg, tracker.config.init_iters);
        if tracker.config.regression {
            let targets = Array2::from_shape_fn((pos_boxes.len(), 4), |(i, k)| regression_targets(&pos_boxes[i], gt)[k]);
            let x = pos.mapv(|v| v.as_f64());
            tracker.regressor = Some(BBoxRegressor::fit(x.view(), targets.view(), tracker.config.ridge_lambda)?);
        }
        let keep_pos = pos.nrows().min(tracker.config.harvest_pos.max(1));
        let keep_neg = neg.nrows().min(tracker.config.harvest_neg.max(1));
        tracker.store.push(
            0,
            pos.slice(ndarray::s![..keep_pos, ..]).to_owned(),
            neg.slice(ndarray::s![..keep_neg, ..]).to_owned(),
        );
        Ok(tracker)
    }

    pub fn model(&self) -> &ModelParams<T> {
        &self.model
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// The online head (fc4-fc6), e.g. to install known scores.
    pub fn head_mut(&mut self) -> &mut crate::head::HeadParams<T> {
        &mut self.model.head
    }

    pub fn regressor(&self) -> Option<&BBoxRegressor> {
        self.regressor.as_ref()
    }

    pub fn store(&self) -> &SampleStore<T> {
        &self.store
    }

    pub fn prev_state(&self) -> TargetState {
        self.prev
    }

    /// Index of the last processed frame (0 after init).
    pub fn frame_index(&self) -> usize {
        self.current
    }

    /// Flattened fused features (pruning off) of `boxes`, one row each.
    pub fn features(&self, pair: &FramePair, boxes: &[BBox]) -> Result<Array2<T>> {
        let size = self.model.config.backbone.input_size;
        let len = self.model.config.feature_len()?;
        let mut out = Array2::zeros((boxes.len(), len));
        for (mut row, b) in out.axis_iter_mut(Axis(0)).zip(boxes) {
            let (rgb, mut thermal) = pair.patches::<T>(b, size)?;
            if self.config.zero_thermal {
                thermal.fill(T::zero());
            }
            let f = self.model.features(rgb.view(), thermal.view())?;
            row.assign(&Array1::from_iter(f.iter().copied()));
        }
        Ok(out)
    }

    fn pick_rows(&mut self, x: &Array2<T>, n: usize) -> Array2<T> {
        if n == 0 || x.nrows() <= n {
            return x.clone();
        }
        let idx = index::sample(&mut self.rng, x.nrows(), n).into_vec();
        x.select(Axis(0), &idx)
    }

    /// `iters` SGD steps of fc4-fc6 on mini-batches of the given features.
    fn train_head(&mut self, pos: &Array2<T>, neg: &Array2<T>, iters: usize) {
        let sgd = Sgd {
            momentum: self.config.momentum,
            weight_decay: self.config.weight_decay,
            clip_gradient: self.config.clip_gradient,
        };
        let (lr45, lr6) = (self.config.lr_fc45, self.config.lr_fc6);
        for _ in 0..iters {
            let p = self.pick_rows(pos, self.config.batch_pos);
            let n = self.pick_rows(neg, self.config.batch_neg);
            let x = concatenate(Axis(0), &[p.view(), n.view()]).expect("equal feature lengths");
            let labels: Vec<Label> = (0..x.nrows())
                .map(|i| if i < p.nrows() { Label::Positive } else { Label::Negative })
                .collect();
            let (logits, trace) = self.model.head.logits_traced(x.view(), 0).expect("single branch");
            let g = loss_grad(logits.view(), &labels, labels.len());
            let mut grads = self.buffers.zeros_like();
            self.model.head.backward(&trace, g.view(), &mut grads.head);
            sgd.step(&mut self.model, &grads, &mut self.buffers, |kind| match kind {
                ParamKind::Conv => None,
                ParamKind::Fc => Some(lr45),
                ParamKind::Fc6(_) => Some(lr6),
            });
        }
    }

    /// Tracks one frame.
    pub fn step(&mut self, rgb: &Image, thermal: &Image) -> Result<FrameReport> {
        self.current += 1;
        let t = self.current;
        let pair = FramePair::new(rgb, thermal);
        let frame = TargetFrame {
            image_w: rgb.width as f64,
            image_h: rgb.height as f64,
            ..self.frame
        };
        let cands = gaussian_candidates(&self.prev, &frame, &self.config.candidate_spec(), &mut self.rng);
        let feats = self.features(&pair, &cands.boxes)?;
        let scores = self.model.head.positive_scores(feats.view(), 0)?;
        let best = select_winner(&scores).expect("at least one candidate");
        let f_plus = scores[best];
        let winner = cands.boxes[best];
        let reliable = f_plus > self.config.reliability;
        let mut bbox = winner;
        let mut regressed = false;
        if reliable {
            if let Some(reg) = &self.regressor {
                let f = feats.row(best).mapv(|v| v.as_f64());
                let r = reg.apply(f.view(), &winner);
                if r.is_valid() && r.overlap_with_image(frame.image_w, frame.image_h) > 0.0 {
                    bbox = r;
                    regressed = true;
                }
            }
            self.harvest(&pair, &bbox, t)?;
        }
        self.prev = cands.states[best];
        let update = if !reliable {
            Some(UpdateKind::Short)
        } else if t % self.config.long_interval == 0 {
            Some(UpdateKind::Long)
        } else {
            None
        };
        let update = update.filter(|kind| self.online_update(*kind, t));
        self.store.evict(t + 1, self.config.long_window, self.config.short_window);
        Ok(FrameReport {
            frame: t,
            bbox,
            winner,
            f_plus,
            regressed,
            update,
        })
    }

    fn harvest(&mut self, pair: &FramePair, bbox: &BBox, t: usize) -> Result<()> {
        if self.config.harvest_pos == 0 && self.config.harvest_neg == 0 {
            return Ok(());
        }
        let spec = SampleSpec {
            min_size: self.config.min_size,
            ..SampleSpec::with_counts(self.config.harvest_pos, self.config.harvest_neg)
        };
        let (w, h) = (pair.width(), pair.height());
        let fitted = crate::sampling::fit_inside(bbox, w as f64, h as f64, self.config.min_size);
        match draw_training_samples(&fitted, w, h, &spec, &mut self.rng) {
            Ok((pos, neg)) => {
                let pf = self.features(pair, &pos)?;
                let nf = self.features(pair, &neg)?;
                self.store.push(t, pf, nf);
                Ok(())
            }
            Err(DapError::SamplingExhausted { .. }) => {
                log::debug!("frame {t}: no samples harvested around {bbox:?}");
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    /// Fine-tunes the head from the store; returns whether it ran.
    pub fn online_update(&mut self, kind: UpdateKind, current: usize) -> bool {
        let window = match kind {
            UpdateKind::Short => self.config.short_window,
            UpdateKind::Long => self.config.long_window,
        };
        let pos = self.store.positives_within(current, window);
        let neg = self.store.negatives_within(current, self.config.short_window);
        match (pos, neg) {
            (Some(p), Some(n)) => {
                self.train_head(&p, &n, self.config.update_iters);
                true
            }
            _ => false,
        }
    }

    /// Tracks a whole sequence from its first ground-truth box; the first
    /// output is that box.
    pub fn run(pretrained: &ModelParams<T>, seq: &RGBTSequence, config: TrackerConfig) -> Result<Vec<FrameReport>> {
        let gt = seq.gt[0];
        let mut tracker = Self::init(pretrained, &*seq.rgb(0)?, &*seq.thermal(0)?, &gt, config)?;
        let mut out = vec![FrameReport {
            frame: 0,
            bbox: gt,
            winner: gt,
            f_plus: 1.0,
            regressed: false,
            update: None,
        }];
        for i in 1..seq.len() {
            out.push(tracker.step(&*seq.rgb(i)?, &*seq.thermal(i)?)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn winner_is_first_maximum() {
        assert_eq!(select_winner(&[0.9, 0.2]), Some(0));
        assert_eq!(select_winner(&[0.2, 0.9, 0.9]), Some(1));
        assert_eq!(select_winner(&[]), None);
    }

    #[test]
    fn offsets() {
        let b = BBox::new(10.0, 20.0, 30.0, 40.0).unwrap();
        assert_eq!(apply_offsets(&b, [0.0; 4]), b);
        let moved = apply_offsets(&b, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(moved.center().0 - b.center().0, 30.0);
        let t = BBox::new(14.0, 18.0, 33.0, 37.0).unwrap();
        let back = apply_offsets(&b, regression_targets(&b, &t));
        assert!((back.x - t.x).abs() < 1e-12 && (back.w - t.w).abs() < 1e-12);
    }

    fn oracle(x: &Array2<f64>, y: &Array2<f64>, lambda: f64) -> (DMatrix<f64>, DVector<f64>) {
        // augmented normal equations with an unpenalized intercept column
        let (n, d) = x.dim();
        let xa = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x[[i, j]] } else { 1.0 });
        let ym = DMatrix::from_fn(n, 4, |i, j| y[[i, j]]);
        let mut a = xa.transpose() * &xa;
        for i in 0..d {
            a[(i, i)] += lambda;
        }
        let sol = a.lu().solve(&(xa.transpose() * ym)).unwrap();
        (sol.rows(0, d).into_owned(), sol.row(d).transpose())
    }

    #[test]
    fn ridge_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &(n, d) in &[(40usize, 6usize), (8, 20)] {
            let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
            let w = Array2::from_shape_fn((d, 4), |_| rng.random_range(-1.0..1.0));
            let y = x.dot(&w) + 0.3;
            for lambda in [0.5, 1000.0] {
                let reg = BBoxRegressor::fit(x.view(), y.view(), lambda).unwrap();
                let (ow, ob) = oracle(&x, &y, lambda);
                assert!((&reg.weights - &ow).amax() < 1e-6, "n={n} d={d}");
                assert!((&reg.bias - &ob).amax() < 1e-6);
            }
        }
    }

    #[test]
    fn regressor_leaves_gt_alone_on_noiseless_fit() {
        // features are a fixed linear image of the offsets
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mix = Array2::from_shape_fn((4, 12), |_| rng.random_range(-20.0..20.0));
        let gt = BBox::new(50.0, 40.0, 30.0, 24.0).unwrap();
        let mut samples = Vec::new();
        for _ in 0..200 {
            let s = BBox::from_center(
                55.0 + rng.random_range(-3.0..3.0),
                52.0 + rng.random_range(-3.0..3.0),
                30.0 * rng.random_range(0.9..1.1),
                24.0 * rng.random_range(0.9..1.1),
            )
            .unwrap();
            samples.push(s);
        }
        let targets = Array2::from_shape_fn((200, 4), |(i, k)| regression_targets(&samples[i], &gt)[k]);
        let feats = targets.dot(&mix);
        let reg = BBoxRegressor::fit(feats.view(), targets.view(), 1.0).unwrap();
        let at_gt = Array1::zeros(12);
        for d in reg.predict(at_gt.view()) {
            assert!(d.abs() < 0.01, "{d}");
        }
    }

    #[test]
    fn store_eviction_keeps_windows() {
        let mut store = SampleStore::<f32>::new();
        for t in 0..150 {
            store.push(t, Array2::zeros((1, 3)), Array2::zeros((2, 3)));
            store.evict(t + 1, 100, 20);
        }
        assert!(store.oldest_positive().unwrap() >= 150 - 100);
        // frames 51..=149 and 131..=149 remain
        assert_eq!(store.positives_within(150, 100).unwrap().nrows(), 99);
        assert_eq!(store.negatives_within(150, 20).unwrap().nrows(), 38);
        assert_eq!(store.positives_within(150, 20).unwrap().nrows(), 19);
    }
}
