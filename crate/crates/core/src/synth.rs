//! Synthetic RGB-thermal sequences with a known target trajectory.
//!
//! The RGB frames show a striped coloured blob over a textured background
//! with moving distractor blobs; the thermal frames show the same blob as a
//! hot spot over a cool background. Inside a failure window a modality
//! renders the target exactly as background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::RGBTSequence;
use crate::error::{DapError, Result};
use crate::evaluation::Attribute;
use crate::geometry::BBox;
use crate::image::Image;

/// Inclusive frame interval.
pub type Window = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub target_w: f64,
    pub target_h: f64,
    /// Distance of the target's base colour from the mean background colour.
    pub rgb_contrast: f64,
    /// Heat of the target above the thermal background.
    pub thermal_contrast: f64,
    /// Pixels per frame.
    pub velocity: (f64, f64),
    /// Standard deviation of the per-frame position noise, in pixels.
    pub motion_noise: f64,
    /// Number of RGB distractor blobs.
    pub clutter: usize,
    /// Amplitude of the background texture.
    pub texture: f64,
    pub rgb_failures: Vec<Window>,
    pub thermal_failures: Vec<Window>,
    /// Frames where the target is hidden in both modalities.
    pub occlusions: Vec<Window>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 128,
            height: 96,
            frames: 60,
            target_w: 24.0,
            target_h: 20.0,
            rgb_contrast: 90.0,
            thermal_contrast: 110.0,
            velocity: (2.0, 1.0),
            motion_noise: 0.5,
            clutter: 3,
            texture: 30.0,
            rgb_failures: Vec::new(),
            thermal_failures: Vec::new(),
            occlusions: Vec::new(),
            seed: 0,
        }
    }
}

fn in_windows(windows: &[Window], t: usize) -> bool {
    windows.iter().any(|&(a, b)| a <= t && t <= b)
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DapError::Config(m));
        if self.width < 32 || self.height < 32 {
            return bad(format!("image {}x{} smaller than 32x32", self.width, self.height));
        }
        if self.frames == 0 {
            return bad("sequence needs at least one frame".into());
        }
        if !(self.target_w >= 4.0 && self.target_h >= 4.0)
            || self.target_w > self.width as f64
            || self.target_h > self.height as f64
        {
            return bad(format!(
                "target {}x{} does not fit a {}x{} image",
                self.target_w, self.target_h, self.width, self.height
            ));
        }
        for (what, ws) in [
            ("rgb failure", &self.rgb_failures),
            ("thermal failure", &self.thermal_failures),
            ("occlusion", &self.occlusions),
        ] {
            for &(a, b) in ws {
                if a > b || b >= self.frames {
                    return bad(format!("{what} window [{a}, {b}] outside 0..{}", self.frames));
                }
            }
        }
        let nums = [
            self.rgb_contrast,
            self.thermal_contrast,
            self.velocity.0,
            self.velocity.1,
            self.motion_noise,
            self.texture,
        ];
        if nums.iter().any(|v| !v.is_finite()) || self.motion_noise < 0.0 {
            return bad("non-finite or negative synthesis parameter".into());
        }
        Ok(())
    }

    pub fn rgb_fails(&self, t: usize) -> bool {
        in_windows(&self.rgb_failures, t) || in_windows(&self.occlusions, t)
    }

    pub fn thermal_fails(&self, t: usize) -> bool {
        in_windows(&self.thermal_failures, t) || in_windows(&self.occlusions, t)
    }
}

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: f64,
}

struct Blob {
    w: f64,
    h: f64,
    color: [f64; 3],
    /// Stripe direction and spatial frequency.
    stripe: (f64, f64),
    track: Vec<(f64, f64)>,
}

/// Everything random about a sequence, drawn once from the seed.
struct Scene {
    bg_rgb: Vec<f32>,
    bg_thermal: Vec<f32>,
    target: Blob,
    target_heat: f64,
    distractors: Vec<Blob>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Bounces a centre trajectory off the image borders.
fn simulate(
    cfg: &SynthConfig,
    start: (f64, f64),
    velocity: (f64, f64),
    noise: f64,
    size: (f64, f64),
    rng: &mut ChaCha8Rng,
) -> Vec<(f64, f64)> {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let (lo_x, hi_x) = (size.0 / 2.0, w - size.0 / 2.0);
    let (lo_y, hi_y) = (size.1 / 2.0, h - size.1 / 2.0);
    let reflect = |p: f64, v: f64, lo: f64, hi: f64| -> (f64, f64) {
        if hi <= lo {
            return ((lo + hi) / 2.0, v);
        }
        let mut p = p;
        let mut v = v;
        for _ in 0..4 {
            if p < lo {
                p = 2.0 * lo - p;
                v = -v;
            } else if p > hi {
                p = 2.0 * hi - p;
                v = -v;
            }
        }
        (p.clamp(lo, hi), v)
    };
    let (mut x, mut y) = start;
    let (mut vx, mut vy) = velocity;
    let mut out = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        if t > 0 {
            let (nx, nvx) = reflect(x + vx + noise * normal(rng), vx, lo_x, hi_x);
            let (ny, nvy) = reflect(y + vy + noise * normal(rng), vy, lo_y, hi_y);
            (x, vx, y, vy) = (nx, nvx, ny, nvy);
        }
        out.push((x, y));
    }
    out
}

fn waves(rng: &mut ChaCha8Rng, amp: f64) -> Vec<Wave> {
    (0..3)
        .map(|_| Wave {
            fx: rng.random_range(-0.25..0.25),
            fy: rng.random_range(-0.25..0.25),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            amp: amp * rng.random_range(0.3..1.0),
        })
        .collect()
}

fn wave_sum(ws: &[Wave], x: f64, y: f64) -> f64 {
    ws.iter().map(|w| w.amp * (w.fx * x + w.fy * y + w.phase).sin()).sum()
}

fn build_scene(cfg: &SynthConfig) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h) = (cfg.width, cfg.height);
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(70.0..180.0));
    let channel_waves: Vec<Vec<Wave>> = (0..3).map(|_| waves(&mut rng, cfg.texture)).collect();
    let mut bg_rgb = vec![0f32; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = base[c] + wave_sum(&channel_waves[c], x as f64, y as f64) + rng.random_range(-8.0..8.0);
                bg_rgb[(y * w + x) * 3 + c] = v as f32;
            }
        }
    }
    let t_base = rng.random_range(40.0..70.0);
    let t_waves = waves(&mut rng, 12.0);
    let mut bg_thermal = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            bg_thermal[y * w + x] = (t_base + wave_sum(&t_waves, x as f64, y as f64) + rng.random_range(-5.0..5.0)) as f32;
        }
    }

    // target colour: a random direction away from the mean background colour
    let dir = loop {
        let d: [f64; 3] = std::array::from_fn(|_| normal(&mut rng));
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-3 {
            break d.map(|v| v / n);
        }
    };
    let color = std::array::from_fn(|c| (base[c] + cfg.rgb_contrast * dir[c]).clamp(10.0, 245.0));
    let size = (cfg.target_w, cfg.target_h);
    let start = (
        rng.random_range(size.0 / 2.0..=cfg.width as f64 - size.0 / 2.0),
        rng.random_range(size.1 / 2.0..=cfg.height as f64 - size.1 / 2.0),
    );
    let track = simulate(cfg, start, cfg.velocity, cfg.motion_noise, size, &mut rng);
    let target = Blob {
        w: size.0,
        h: size.1,
        color,
        stripe: (rng.random_range(0.0..std::f64::consts::PI), rng.random_range(0.6..1.2)),
        track,
    };
    let distractors = (0..cfg.clutter)
        .map(|_| {
            let dw = cfg.target_w * rng.random_range(0.6..1.2);
            let dh = cfg.target_h * rng.random_range(0.6..1.2);
            let start = (
                rng.random_range(0.0..cfg.width as f64),
                rng.random_range(0.0..cfg.height as f64),
            );
            let v = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let track = simulate(cfg, start, v, 0.3, (dw, dh), &mut rng);
            Blob {
                w: dw,
                h: dh,
                color: std::array::from_fn(|_| rng.random_range(20.0..235.0)),
                stripe: (rng.random_range(0.0..std::f64::consts::PI), rng.random_range(0.3..1.2)),
                track,
            }
        })
        .collect();
    Scene {
        bg_rgb,
        bg_thermal,
        target,
        target_heat: t_base + cfg.thermal_contrast,
        distractors,
    }
}

/// Calls `f(x, y, u, v)` for every pixel whose centre lies inside the
/// blob's ellipse at frame `t`; (u, v) are offsets from the blob centre.
fn for_blob_pixels(blob: &Blob, t: usize, width: usize, height: usize, mut f: impl FnMut(usize, usize, f64, f64)) {
    let (cx, cy) = blob.track[t];
    let (rx, ry) = (blob.w / 2.0, blob.h / 2.0);
    let x0 = (cx - rx).floor().max(0.0) as usize;
    let y0 = (cy - ry).floor().max(0.0) as usize;
    let x1 = ((cx + rx).ceil().max(0.0) as usize).min(width);
    let y1 = ((cy + ry).ceil().max(0.0) as usize).min(height);
    for y in y0..y1 {
        for x in x0..x1 {
            let u = x as f64 + 0.5 - cx;
            let v = y as f64 + 0.5 - cy;
            if (u / rx).powi(2) + (v / ry).powi(2) <= 1.0 {
                f(x, y, u, v);
            }
        }
    }
}

fn stripe_value(blob: &Blob, u: f64, v: f64) -> f64 {
    let (theta, freq) = blob.stripe;
    (freq * (u * theta.cos() + v * theta.sin())).sin().signum()
}

fn quantize(img: &mut Image) {
    for v in &mut img.data {
        *v = v.round().clamp(0.0, 255.0);
    }
}

fn render(cfg: &SynthConfig, scene: &Scene, t: usize, with_target: bool) -> (Image, Image) {
    let (w, h) = (cfg.width, cfg.height);
    let mut rgb = Image {
        width: w,
        height: h,
        channels: 3,
        data: scene.bg_rgb.clone(),
    };
    let mut thermal = Image {
        width: w,
        height: h,
        channels: 1,
        data: scene.bg_thermal.clone(),
    };
    for d in &scene.distractors {
        for_blob_pixels(d, t, w, h, |x, y, u, v| {
            let s = stripe_value(d, u, v);
            for c in 0..3 {
                rgb.set(x, y, c, (d.color[c] + 20.0 * s) as f32);
            }
        });
    }
    if with_target {
        let tg = &scene.target;
        if !cfg.rgb_fails(t) {
            for_blob_pixels(tg, t, w, h, |x, y, u, v| {
                let s = stripe_value(tg, u, v);
                for c in 0..3 {
                    rgb.set(x, y, c, (tg.color[c] + 25.0 * s) as f32);
                }
            });
        }
        if !cfg.thermal_fails(t) {
            for_blob_pixels(tg, t, w, h, |x, y, u, v| {
                let r2 = (u / (tg.w / 2.0)).powi(2) + (v / (tg.h / 2.0)).powi(2);
                thermal.set(x, y, 0, (scene.target_heat - 0.3 * cfg.thermal_contrast * r2) as f32);
            });
        }
    }
    quantize(&mut rgb);
    quantize(&mut thermal);
    (rgb, thermal)
}

fn gt_box(scene: &Scene, t: usize) -> BBox {
    let (cx, cy) = scene.target.track[t];
    BBox {
        x: cx - scene.target.w / 2.0,
        y: cy - scene.target.h / 2.0,
        w: scene.target.w,
        h: scene.target.h,
    }
}

/// Generates the sequence described by `cfg`; deterministic in `cfg.seed`.
pub fn synth_sequence(name: &str, cfg: &SynthConfig) -> Result<RGBTSequence> {
    cfg.validate()?;
    let scene = build_scene(cfg);
    let mut rgb = Vec::with_capacity(cfg.frames);
    let mut thermal = Vec::with_capacity(cfg.frames);
    let mut gt = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let (r, th) = render(cfg, &scene, t, true);
        rgb.push(r);
        thermal.push(th);
        gt.push(gt_box(&scene, t));
    }
    let mut seq = RGBTSequence::from_images(name, rgb, thermal, gt)?;
    seq.attributes = attributes(cfg);
    Ok(seq)
}

/// Frame `t` rendered without the target (distractors included).
pub fn synth_background(cfg: &SynthConfig, t: usize) -> Result<(Image, Image)> {
    cfg.validate()?;
    if t >= cfg.frames {
        return Err(DapError::Config(format!("frame {t} outside 0..{}", cfg.frames)));
    }
    let scene = build_scene(cfg);
    Ok(render(cfg, &scene, t, false))
}

/// Mean absolute difference between `frame` and `background` inside `bbox`.
pub fn contrast(frame: &Image, background: &Image, bbox: &BBox) -> f64 {
    let diff = Image {
        data: frame.data.iter().zip(&background.data).map(|(a, b)| (a - b).abs()).collect(),
        ..*frame
    };
    diff.region_mean(bbox).unwrap_or(0.0)
}

fn attributes(cfg: &SynthConfig) -> std::collections::BTreeSet<Attribute> {
    let mut a = std::collections::BTreeSet::new();
    a.insert(if cfg.occlusions.is_empty() { Attribute::NO } else { Attribute::HO });
    if cfg.clutter > 0 {
        a.insert(Attribute::BC);
    }
    if !cfg.rgb_failures.is_empty() {
        a.insert(Attribute::LI);
    }
    if !cfg.thermal_failures.is_empty() {
        a.insert(Attribute::TC);
    }
    if cfg.velocity.0.hypot(cfg.velocity.1) > 0.25 * cfg.target_w.min(cfg.target_h) {
        a.insert(Attribute::FM);
    }
    a
}

/// Train/test collections of synthetic sequences derived from one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub base: SynthConfig,
    pub train_sequences: usize,
    pub test_sequences: usize,
    pub train_frames: usize,
    pub test_frames: usize,
    /// RGB failure window of every test sequence.
    pub test_rgb_failure: Option<Window>,
    /// Length of the single failure window placed in each training
    /// sequence (alternating RGB and thermal); 0 disables them.
    pub train_failure_len: usize,
    /// Speed of the target in pixels per frame (direction is random).
    pub speed: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            base: SynthConfig::default(),
            train_sequences: 5,
            test_sequences: 2,
            train_frames: 40,
            test_frames: 60,
            test_rgb_failure: Some((20, 40)),
            train_failure_len: 10,
            speed: 2.5,
            seed: 0,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        for (_, cfg) in self.train_configs().into_iter().chain(self.test_configs()) {
            cfg.validate()?;
        }
        Ok(())
    }

    fn derived(&self, name: String, index: u64, frames: usize) -> (String, SynthConfig) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let scale = rng.random_range(0.85..1.15);
        let cfg = SynthConfig {
            frames,
            target_w: (self.base.target_w * scale).round(),
            target_h: (self.base.target_h * scale).round(),
            velocity: (self.speed * angle.cos(), self.speed * angle.sin()),
            seed: rng.random(),
            rgb_failures: Vec::new(),
            thermal_failures: Vec::new(),
            ..self.base.clone()
        };
        (name, cfg)
    }

    pub fn train_configs(&self) -> Vec<(String, SynthConfig)> {
        (0..self.train_sequences)
            .map(|i| {
                let (name, mut cfg) = self.derived(format!("train{:02}", i + 1), i as u64 + 1, self.train_frames);
                let len = self.train_failure_len;
                if len > 0 && len < cfg.frames {
                    let start = (cfg.frames - len) / 2;
                    let w = (start, start + len - 1);
                    if i % 2 == 0 {
                        cfg.rgb_failures.push(w);
                    } else {
                        cfg.thermal_failures.push(w);
                    }
                }
                (name, cfg)
            })
            .collect()
    }

    pub fn test_configs(&self) -> Vec<(String, SynthConfig)> {
        (0..self.test_sequences)
            .map(|i| {
                let (name, mut cfg) =
                    self.derived(format!("test{:02}", i + 1), 1000 + i as u64, self.test_frames);
                if let Some(w) = self.test_rgb_failure {
                    cfg.rgb_failures.push(w);
                }
                (name, cfg)
            })
            .collect()
    }

    pub fn train(&self) -> Result<Vec<RGBTSequence>> {
        self.train_configs().iter().map(|(n, c)| synth_sequence(n, c)).collect()
    }

    pub fn test(&self) -> Result<Vec<RGBTSequence>> {
        self.test_configs().iter().map(|(n, c)| synth_sequence(n, c)).collect()
    }
}
