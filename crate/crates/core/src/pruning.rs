//! Train-time channel pruning.
//!
//! Channels are scored by global average pooling, then `M = floor(N * ratio)`
//! of them are kept by weighted random selection without replacement: each
//! channel draws `r_c ~ U(0, 1)` and gets the key `r_c^(1 / score_c)`; the
//! `M` largest keys survive and every other channel is zeroed.

use ndarray::{Array1, Array3, ArrayView3, Axis};
use rand::Rng;

use crate::error::{DapError, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruningConfig {
    pub wrs_ratio: f64,
    pub enabled: bool,
    /// Scale survivors by N/M (off by default).
    pub rescale: bool,
}

impl PruningConfig {
    pub fn new(wrs_ratio: f64) -> Result<Self> {
        if !(wrs_ratio > 0.0 && wrs_ratio <= 1.0) {
            return Err(DapError::Config(format!("wrs_ratio must lie in (0, 1], got {wrs_ratio}")));
        }
        Ok(PruningConfig {
            wrs_ratio,
            enabled: true,
            rescale: false,
        })
    }

    pub fn disabled() -> Self {
        PruningConfig {
            wrs_ratio: 1.0,
            enabled: false,
            rescale: false,
        }
    }

    /// Number of surviving channels out of `n`.
    pub fn survivors(&self, n: usize) -> Result<usize> {
        // the epsilon keeps products such as 0.29 * 100 from flooring to 28
        let m = (n as f64 * self.wrs_ratio + 1e-9).floor() as usize;
        if m == 0 {
            return Err(DapError::Config(format!(
                "wrs_ratio {} keeps no channel out of {n}",
                self.wrs_ratio
            )));
        }
        Ok(m.min(n))
    }
}

/// Result of one weighted random selection.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSelection {
    pub scores: Vec<f64>,
    pub randoms: Vec<f64>,
    pub keys: Vec<f64>,
    /// Surviving channel indices, ascending.
    pub selected: Vec<usize>,
}

impl ChannelSelection {
    /// Selection that keeps every channel.
    pub fn all(n: usize) -> Self {
        ChannelSelection {
            scores: vec![1.0; n],
            randoms: vec![0.5; n],
            keys: vec![0.5; n],
            selected: (0..n).collect(),
        }
    }

    pub fn channels(&self) -> usize {
        self.scores.len()
    }

    /// Per-channel multiplier: 1 (or N/M) for survivors, 0 otherwise.
    pub fn mask<T: Real>(&self, config: &PruningConfig) -> Array1<T> {
        let n = self.channels();
        let keep = if config.rescale {
            T::lit(n as f64 / self.selected.len() as f64)
        } else {
            T::one()
        };
        let mut mask = Array1::zeros(n);
        for &c in &self.selected {
            mask[c] = keep;
        }
        mask
    }
}

/// Global average pooling score of every channel.
pub fn channel_scores<T: Real>(x: ArrayView3<T>) -> Vec<f64> {
    let (_, h, w) = x.dim();
    let area = (h * w) as f64;
    x.axis_iter(Axis(0))
        .map(|ch| ch.iter().map(|v| v.as_f64()).sum::<f64>() / area)
        .collect()
}

/// Weighted random selection of `floor(N * wrs_ratio)` channels.
///
/// Non-positive scores get key 0 (the limit of `r^(1/s)` as `s -> 0+`).
/// Keys are compared through `ln(r) / s` to avoid underflow; equal keys
/// favour the lower channel index.
pub fn wrs_select<R: Rng + ?Sized>(scores: &[f64], config: &PruningConfig, rng: &mut R) -> Result<ChannelSelection> {
    if !scores.iter().any(|&s| s > 0.0) {
        return Err(DapError::DegenerateScores);
    }
    let m = config.survivors(scores.len())?;
    let randoms: Vec<f64> = scores.iter().map(|_| open_unit(rng)).collect();
    let log_keys: Vec<f64> = scores
        .iter()
        .zip(&randoms)
        .map(|(&s, &r)| if s > 0.0 { r.ln() / s } else { f64::NEG_INFINITY })
        .collect();
    let keys = log_keys.iter().map(|&k| k.exp()).collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| log_keys[b].total_cmp(&log_keys[a]).then(a.cmp(&b)));
    let mut selected = order[..m].to_vec();
    selected.sort_unstable();
    Ok(ChannelSelection {
        scores: scores.to_vec(),
        randoms,
        keys,
        selected,
    })
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let r: f64 = rng.random();
        if r > 0.0 {
            return r;
        }
    }
}

/// Zeroes the channels not in `selection`; identity when pruning is disabled.
pub fn prune<T: Real>(x: ArrayView3<T>, selection: &ChannelSelection, config: &PruningConfig) -> Result<Array3<T>> {
    if !config.enabled {
        return Ok(x.to_owned());
    }
    let n = x.dim().0;
    if n != selection.channels() {
        return Err(DapError::ChannelMismatch {
            index: 0,
            expected: selection.channels(),
            actual: n,
        });
    }
    let mut out = x.to_owned();
    apply_mask(&mut out, &selection.mask(config));
    Ok(out)
}

/// Multiplies every channel plane by its mask entry. Used for the forward
/// pass and, with the same mask, for the backward pass.
pub fn apply_mask<T: Real>(x: &mut Array3<T>, mask: &Array1<T>) {
    for (mut plane, &m) in x.axis_iter_mut(Axis(0)).zip(mask.iter()) {
        if m == T::zero() {
            plane.fill(T::zero());
        } else if m != T::one() {
            plane.mapv_inplace(|v| v * m);
        }
    }
}
