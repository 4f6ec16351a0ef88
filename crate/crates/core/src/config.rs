//! Flat TOML run configuration shared by every command.
//!
//! Every key is optional except where a command needs it: `train` needs
//! `wrs_ratio`, and `train`/`track` need a seed (from the file or the
//! command line). Unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//! net = "toy"
//! wrs_ratio = 0.7
//! epochs = 40
//! n_cand = 64
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{DapError, Result};
use crate::evaluation::EvalConfig;
use crate::model::{Init, NetConfig};
use crate::synth::SuiteConfig;
use crate::tracking::TrackerConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,

    /// "toy" (8/16/32 channels) or "full" (96/256/512).
    pub net: Option<String>,
    /// "he" or "gaussian".
    pub init: Option<String>,
    pub init_std: Option<f64>,

    pub width: Option<usize>,
    pub height: Option<usize>,
    pub train_sequences: Option<usize>,
    pub test_sequences: Option<usize>,
    pub train_frames: Option<usize>,
    pub test_frames: Option<usize>,
    pub target_w: Option<f64>,
    pub target_h: Option<f64>,
    pub rgb_contrast: Option<f64>,
    pub thermal_contrast: Option<f64>,
    pub speed: Option<f64>,
    pub motion_noise: Option<f64>,
    pub clutter: Option<usize>,
    pub texture: Option<f64>,
    /// Inclusive `[first, last]` RGB failure frames of the test sequences.
    pub test_rgb_failure: Option<[usize; 2]>,
    pub train_failure_len: Option<usize>,

    pub epochs: Option<usize>,
    pub lr_conv: Option<f64>,
    pub lr_fc: Option<f64>,
    pub momentum: Option<f64>,
    pub weight_decay: Option<f64>,
    pub clip_gradient: Option<f64>,
    pub frames_per_batch: Option<usize>,
    pub pos_per_frame: Option<usize>,
    pub neg_per_frame: Option<usize>,
    pub wrs_ratio: Option<f64>,
    pub prune_rescale: Option<bool>,

    pub n_cand: Option<usize>,
    pub trans_std: Option<f64>,
    pub scale_std: Option<f64>,
    pub scale_step: Option<f64>,
    pub include_prev: Option<bool>,
    pub min_size: Option<f64>,
    pub init_pos: Option<usize>,
    pub init_neg: Option<usize>,
    pub init_iters: Option<usize>,
    pub update_iters: Option<usize>,
    pub lr_fc45: Option<f64>,
    pub lr_fc6: Option<f64>,
    pub track_momentum: Option<f64>,
    pub track_weight_decay: Option<f64>,
    pub track_clip_gradient: Option<f64>,
    pub batch_pos: Option<usize>,
    pub batch_neg: Option<usize>,
    pub harvest_pos: Option<usize>,
    pub harvest_neg: Option<usize>,
    pub long_interval: Option<usize>,
    pub long_window: Option<usize>,
    pub short_window: Option<usize>,
    pub reliability: Option<f64>,
    pub ridge_lambda: Option<f64>,
    pub regression: Option<bool>,

    pub pr_threshold: Option<f64>,
}

fn set<V: Clone>(dst: &mut V, src: &Option<V>) {
    if let Some(v) = src {
        *dst = v.clone();
    }
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| DapError::Config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DapError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Command-line seed wins over the file; one of them is required.
    pub fn require_seed(&self, cli: Option<u64>) -> Result<u64> {
        cli.or(self.seed)
            .ok_or_else(|| DapError::Config("a seed is required (config key `seed` or --seed)".into()))
    }

    pub fn net_config(&self) -> Result<NetConfig> {
        match self.net.as_deref().unwrap_or("toy") {
            "toy" => Ok(NetConfig::toy()),
            "full" => Ok(NetConfig::full()),
            other => Err(DapError::Config(format!("unknown net {other:?}; expected toy or full"))),
        }
    }

    pub fn init(&self) -> Result<Init> {
        match self.init.as_deref().unwrap_or("he") {
            "he" => Ok(Init::He),
            "gaussian" => Ok(Init::Gaussian {
                std: self.init_std.unwrap_or(0.01),
            }),
            other => Err(DapError::Config(format!("unknown init {other:?}; expected he or gaussian"))),
        }
    }

    pub fn suite(&self, seed: u64) -> Result<SuiteConfig> {
        let mut s = SuiteConfig {
            seed,
            ..SuiteConfig::default()
        };
        let b = &mut s.base;
        set(&mut b.width, &self.width);
        set(&mut b.height, &self.height);
        set(&mut b.target_w, &self.target_w);
        set(&mut b.target_h, &self.target_h);
        set(&mut b.rgb_contrast, &self.rgb_contrast);
        set(&mut b.thermal_contrast, &self.thermal_contrast);
        set(&mut b.motion_noise, &self.motion_noise);
        set(&mut b.clutter, &self.clutter);
        set(&mut b.texture, &self.texture);
        set(&mut s.train_sequences, &self.train_sequences);
        set(&mut s.test_sequences, &self.test_sequences);
        set(&mut s.train_frames, &self.train_frames);
        set(&mut s.test_frames, &self.test_frames);
        set(&mut s.speed, &self.speed);
        set(&mut s.train_failure_len, &self.train_failure_len);
        if let Some([a, b]) = self.test_rgb_failure {
            s.test_rgb_failure = Some((a, b));
        }
        s.validate()?;
        Ok(s)
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let wrs_ratio = self
            .wrs_ratio
            .ok_or_else(|| DapError::Config("wrs_ratio must be set for training".into()))?;
        let mut c = TrainConfig {
            wrs_ratio,
            seed,
            ..TrainConfig::default()
        };
        set(&mut c.epochs, &self.epochs);
        set(&mut c.lr_conv, &self.lr_conv);
        set(&mut c.lr_fc, &self.lr_fc);
        set(&mut c.momentum, &self.momentum);
        set(&mut c.weight_decay, &self.weight_decay);
        set(&mut c.clip_gradient, &self.clip_gradient);
        set(&mut c.frames_per_batch, &self.frames_per_batch);
        set(&mut c.pos_per_frame, &self.pos_per_frame);
        set(&mut c.neg_per_frame, &self.neg_per_frame);
        set(&mut c.prune_rescale, &self.prune_rescale);
        c.validate()?;
        Ok(c)
    }

    pub fn tracker_config(&self, seed: u64) -> Result<TrackerConfig> {
        let mut c = TrackerConfig {
            seed,
            ..TrackerConfig::default()
        };
        set(&mut c.n_cand, &self.n_cand);
        set(&mut c.trans_std, &self.trans_std);
        set(&mut c.scale_std, &self.scale_std);
        set(&mut c.scale_step, &self.scale_step);
        set(&mut c.include_prev, &self.include_prev);
        set(&mut c.min_size, &self.min_size);
        set(&mut c.init_pos, &self.init_pos);
        set(&mut c.init_neg, &self.init_neg);
        set(&mut c.init_iters, &self.init_iters);
        set(&mut c.update_iters, &self.update_iters);
        set(&mut c.lr_fc45, &self.lr_fc45);
        set(&mut c.lr_fc6, &self.lr_fc6);
        set(&mut c.momentum, &self.track_momentum);
        set(&mut c.weight_decay, &self.track_weight_decay);
        set(&mut c.clip_gradient, &self.track_clip_gradient);
        set(&mut c.batch_pos, &self.batch_pos);
        set(&mut c.batch_neg, &self.batch_neg);
        set(&mut c.harvest_pos, &self.harvest_pos);
        set(&mut c.harvest_neg, &self.harvest_neg);
        set(&mut c.long_interval, &self.long_interval);
        set(&mut c.long_window, &self.long_window);
        set(&mut c.short_window, &self.short_window);
        set(&mut c.reliability, &self.reliability);
        set(&mut c.ridge_lambda, &self.ridge_lambda);
        set(&mut c.regression, &self.regression);
        c.validate()?;
        Ok(c)
    }

    /// `cli` overrides the file's `pr_threshold`.
    pub fn eval_config(&self, cli: Option<f64>) -> Result<EvalConfig> {
        let t = cli.or(self.pr_threshold).unwrap_or(EvalConfig::default().pr_threshold);
        if !(t >= 0.0) || !t.is_finite() {
            return Err(DapError::Config(format!("pr_threshold {t} must be a finite non-negative number")));
        }
        Ok(EvalConfig::new(t))
    }
}
