//! Offline multi-domain training.
//!
//! Every iteration draws a mini-batch from one training sequence (domain),
//! runs it through the network with pruning active, and applies one SGD
//! step with momentum and weight decay. Only the fc6 branch of that domain
//! is touched.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::RGBTSequence;
use crate::error::{DapError, Result};
use crate::geometry::BBox;
use crate::head::Label;
use crate::image::{FramePair, Image};
use crate::model::{Fusion, ModelParams, ParamKind, PruneMode};
use crate::pruning::PruningConfig;
use crate::real::Real;
use crate::sampling::{draw_training_samples, SampleSpec};

/// Network variants of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Dense aggregation with pruning.
    Full,
    /// Dense aggregation, no pruning.
    NoFP,
    /// Concatenated conv3 features with pruning.
    NoFA,
    /// Concatenated conv3 features, no pruning.
    NoFACP,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoFP, Variant::NoFA, Variant::NoFACP];

    pub fn fusion(self) -> Fusion {
        match self {
            Variant::Full | Variant::NoFP => Fusion::Dense,
            Variant::NoFA | Variant::NoFACP => Fusion::ConcatConv3,
        }
    }

    pub fn pruning(self) -> bool {
        matches!(self, Variant::Full | Variant::NoFA)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoFP => "noFP",
            Variant::NoFA => "noFA",
            Variant::NoFACP => "noFACP",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = DapError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| DapError::Config(format!("unknown variant {s:?} (full, noFP, noFA, noFACP)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Passes over the domain list; one iteration per domain per pass.
    pub epochs: usize,
    pub lr_conv: f64,
    pub lr_fc: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Threshold on the global L2 norm of the gradient.
    pub clip_gradient: f64,
    pub frames_per_batch: usize,
    pub pos_per_frame: usize,
    pub neg_per_frame: usize,
    pub wrs_ratio: f64,
    pub pruning: bool,
    /// Scale surviving channels by N/M.
    pub prune_rescale: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr_conv: 1e-4,
            lr_fc: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            clip_gradient: 100.0,
            frames_per_batch: 8,
            pos_per_frame: 32,
            neg_per_frame: 96,
            wrs_ratio: 0.7,
            pruning: true,
            prune_rescale: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.lr_conv, self.lr_fc];
        if rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(DapError::Config("learning rates must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 || !(self.clip_gradient >= 0.0) {
            return Err(DapError::Config("momentum, weight decay or clip_gradient out of range".into()));
        }
        if self.frames_per_batch == 0 || self.pos_per_frame + self.neg_per_frame == 0 {
            return Err(DapError::Config("empty mini-batch".into()));
        }
        self.pruning_config()?;
        Ok(())
    }

    pub fn pruning_config(&self) -> Result<PruningConfig> {
        Ok(PruningConfig {
            enabled: self.pruning,
            rescale: self.prune_rescale,
            ..PruningConfig::new(self.wrs_ratio)?
        })
    }

    pub fn sample_spec(&self) -> SampleSpec {
        SampleSpec::with_counts(self.pos_per_frame, self.neg_per_frame)
    }
}

/// Momentum SGD with weight decay and global-norm gradient clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    pub clip_gradient: f64,
}

impl Sgd {
    /// Updates every tensor whose `rate` is `Some`, leaving the others
    /// (and their momentum) untouched. Returns the gradient norm over the
    /// updated tensors, before clipping.
    ///
    /// Per entry: `d = g * clip_scale + wd * p; buf = m * buf + d; p -= lr * buf`.
    pub fn step<T: Real>(
        &self,
        params: &mut ModelParams<T>,
        grads: &ModelParams<T>,
        buffers: &mut ModelParams<T>,
        rate: impl Fn(ParamKind) -> Option<f64>,
    ) -> f64 {
        let g_tensors = grads.tensors();
        let norm = g_tensors
            .iter()
            .filter(|t| rate(t.kind).is_some())
            .map(|t| t.value.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let scale = if norm > self.clip_gradient { self.clip_gradient / norm } else { 1.0 };
        let (m, wd, sc) = (T::lit(self.momentum), T::lit(self.weight_decay), T::lit(scale));
        for ((mut p, g), mut b) in params.tensors_mut().into_iter().zip(g_tensors).zip(buffers.tensors_mut()) {
            let Some(lr) = rate(p.kind) else { continue };
            let lr = T::lit(lr);
            ndarray::Zip::from(&mut p.value)
                .and(&g.value)
                .and(&mut b.value)
                .for_each(|p, &g, b| {
                    let d = g * sc + wd * *p;
                    *b = m * *b + d;
                    *p -= lr * *b;
                });
        }
        norm
    }
}

/// Training samples of one frame of a mini-batch.
#[derive(Debug, Clone)]
pub struct BatchFrame {
    pub index: usize,
    pub rgb: Arc<Image>,
    pub thermal: Arc<Image>,
    pub positives: Vec<BBox>,
    pub negatives: Vec<BBox>,
}

#[derive(Debug, Clone)]
pub struct MiniBatch {
    pub frames: Vec<BatchFrame>,
}

impl MiniBatch {
    pub fn len(&self) -> usize {
        self.frames.iter().map(|f| f.positives.len() + f.negatives.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn positives(&self) -> usize {
        self.frames.iter().map(|f| f.positives.len()).sum()
    }

    pub fn frame_indices(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.index).collect()
    }
}

/// Picks `frames` frames (with replacement only when the sequence is
/// shorter) and samples positives and negatives around each ground truth.
pub fn build_minibatch<R: Rng + ?Sized>(
    seq: &RGBTSequence,
    frames: usize,
    spec: &SampleSpec,
    rng: &mut R,
) -> Result<MiniBatch> {
    if seq.is_empty() {
        return Err(DapError::CountMismatch {
            what: format!("annotated frames of {}", seq.name),
            left: 0,
            right: frames,
        });
    }
    let picks: Vec<usize> = if seq.len() >= frames {
        index::sample(rng, seq.len(), frames).into_vec()
    } else {
        (0..frames).map(|_| rng.random_range(0..seq.len())).collect()
    };
    let mut out = Vec::with_capacity(frames);
    for i in picks {
        let rgb = seq.rgb(i)?;
        let thermal = seq.thermal(i)?;
        let (positives, negatives) = draw_training_samples(&seq.gt[i], rgb.width, rgb.height, spec, rng)?;
        out.push(BatchFrame {
            index: i,
            rgb,
            thermal,
            positives,
            negatives,
        });
    }
    Ok(MiniBatch { frames: out })
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub domain: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

pub const LOG_HEADER: &str = "iteration,domain,loss,grad_norm";

impl IterationLog {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.iteration, self.domain, self.loss, self.grad_norm)
    }
}

/// Offline training state: parameters, momentum buffers and the RNG.
pub struct Trainer<T> {
    pub model: ModelParams<T>,
    buffers: ModelParams<T>,
    config: TrainConfig,
    pruning: PruningConfig,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: ModelParams<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            buffers: model.zeros_like(),
            model,
            pruning: config.pruning_config()?,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            iteration: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// One SGD iteration on a mini-batch of `seq` through branch `domain`.
    pub fn step(&mut self, seq: &RGBTSequence, domain: usize) -> Result<IterationLog> {
        let branches = self.model.head.branches();
        if domain >= branches {
            return Err(DapError::UnknownDomain { domain, branches });
        }
        let spec = self.config.sample_spec();
        let batch = build_minibatch(seq, self.config.frames_per_batch, &spec, &mut self.rng)?;
        let n = batch.len();
        let size = self.model.config.backbone.input_size;
        let mut grads = self.model.zeros_like();
        let mut total = 0.0;
        for frame in &batch.frames {
            let pair = FramePair::new(&frame.rgb, &frame.thermal);
            let labelled = frame
                .positives
                .iter()
                .map(|b| (b, Label::Positive))
                .chain(frame.negatives.iter().map(|b| (b, Label::Negative)));
            for (bbox, label) in labelled {
                let (rgb, thermal) = pair.patches::<T>(bbox, size)?;
                let mut prune = PruneMode::Random {
                    config: self.pruning,
                    rng: &mut self.rng,
                };
                total += self.model.accumulate_sample(
                    rgb.view(),
                    thermal.view(),
                    label,
                    domain,
                    &mut prune,
                    n,
                    &mut grads,
                )?;
            }
        }
        let loss = total / n as f64;
        if !loss.is_finite() {
            return Err(DapError::NonFiniteLoss {
                iteration: self.iteration,
                domain,
            });
        }
        let sgd = Sgd {
            momentum: self.config.momentum,
            weight_decay: self.config.weight_decay,
            clip_gradient: self.config.clip_gradient,
        };
        let (lr_conv, lr_fc) = (self.config.lr_conv, self.config.lr_fc);
        let grad_norm = sgd.step(&mut self.model, &grads, &mut self.buffers, |kind| match kind {
            ParamKind::Conv => Some(lr_conv),
            ParamKind::Fc => Some(lr_fc),
            ParamKind::Fc6(k) if k == domain => Some(lr_fc),
            ParamKind::Fc6(_) => None,
        });
        let log = IterationLog {
            iteration: self.iteration,
            domain,
            loss,
            grad_norm,
        };
        self.iteration += 1;
        Ok(log)
    }
}

/// Trains `model` (one fc6 branch per sequence) for `epochs * K`
/// iterations, cycling through the domains; `on_iteration` sees every
/// log row.
pub fn train_offline<T: Real>(
    domains: &[RGBTSequence],
    model: ModelParams<T>,
    config: &TrainConfig,
    mut on_iteration: impl FnMut(&IterationLog),
) -> Result<ModelParams<T>> {
    if domains.is_empty() {
        return Err(DapError::Config("no training sequences".into()));
    }
    if model.head.branches() != domains.len() {
        return Err(DapError::CountMismatch {
            what: "fc6 branches/training sequences".into(),
            left: model.head.branches(),
            right: domains.len(),
        });
    }
    let mut trainer = Trainer::new(model, config.clone())?;
    for it in 0..config.epochs * domains.len() {
        let k = it % domains.len();
        let log = trainer.step(&domains[k], k)?;
        on_iteration(&log);
    }
    Ok(trainer.model)
}

/// Writes the CSV training log: a comment line describing the run, the
/// header, then one row per iteration.
pub fn write_log(out: &mut impl Write, variant: Variant, config: &TrainConfig, rows: &[IterationLog]) -> std::io::Result<()> {
    writeln!(
        out,
        "# variant: {variant}, pruning: {}, wrs_ratio: {}, seed: {}",
        if config.pruning { "on" } else { "off" },
        config.wrs_ratio,
        config.seed
    )?;
    writeln!(out, "{LOG_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Init, NetConfig};

    #[test]
    fn variant_flags() {
        assert_eq!("nofacp".parse::<Variant>().unwrap(), Variant::NoFACP);
        assert!(Variant::Full.pruning() && !Variant::NoFP.pruning());
        assert_eq!(Variant::NoFA.fusion(), Fusion::ConcatConv3);
        assert!("dense".parse::<Variant>().is_err());
    }

    #[test]
    fn sgd_matches_hand_update() {
        let cfg = NetConfig::toy();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = ModelParams::<f64>::init(&cfg, 2, Init::He, &mut rng).unwrap();
        let start = p.clone();
        let mut g = p.zeros_like();
        g.head.fc4.weight[[0, 0]] = 3.0;
        g.head.fc6[0].bias[1] = 4.0;
        let mut buf = p.zeros_like();
        let sgd = Sgd {
            momentum: 0.9,
            weight_decay: 0.0,
            clip_gradient: 1.0,
        };
        let norm = sgd.step(&mut p, &g, &mut buf, |k| match k {
            ParamKind::Fc6(1) => None,
            _ => Some(0.5),
        });
        assert_eq!(norm, 5.0);
        // clipped to norm 1: 3/5 and 4/5
        assert!((p.head.fc4.weight[[0, 0]] - (start.head.fc4.weight[[0, 0]] - 0.5 * 0.6)).abs() < 1e-15);
        assert!((p.head.fc6[0].bias[1] + 0.5 * 0.8).abs() < 1e-15);
        assert_eq!(p.head.fc6[1], start.head.fc6[1]);
    }

    #[test]
    fn zero_clip_leaves_only_weight_decay() {
        let cfg = NetConfig::toy();
        let mut p = ModelParams::<f64>::init(&cfg, 1, Init::He, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let start = p.clone();
        let mut g = p.zeros_like();
        g.head.fc5.weight.fill(1.0);
        let mut buf = p.zeros_like();
        let sgd = Sgd {
            momentum: 0.9,
            weight_decay: 0.01,
            clip_gradient: 0.0,
        };
        sgd.step(&mut p, &g, &mut buf, |_| Some(0.1));
        for (a, b) in p.tensors().iter().zip(start.tensors()) {
            for (x, y) in a.value.iter().zip(b.value.iter()) {
                assert_eq!(*x, y - 0.1 * (0.01 * y));
            }
        }
    }
}
