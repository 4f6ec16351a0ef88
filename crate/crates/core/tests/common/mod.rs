#![allow(dead_code)]

use dapnet::head::{loss, Label};
use dapnet::model::{Init, ModelParams, NetConfig, PruneMode};
use dapnet::pruning::{channel_scores, wrs_select, ChannelSelection, PruningConfig};
use ndarray::{Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Sample {
    pub rgb: Array3<f64>,
    pub thermal: Array3<f64>,
    pub label: Label,
    pub selection: ChannelSelection,
}

/// Largest relative error per parameter tensor.
pub struct GradReport {
    pub per_tensor: Vec<(String, f64, usize)>,
    /// Coordinates redrawn because a ReLU or max-pool decision flipped
    /// inside the difference interval.
    pub kinks: usize,
}

impl GradReport {
    pub fn max(&self) -> f64 {
        self.per_tensor.iter().map(|t| t.1).fold(0.0, f64::max)
    }
}

fn random_patch(size: usize, rng: &mut ChaCha8Rng) -> Array3<f64> {
    Array3::from_shape_fn((3, size, size), |_| rng.random_range(-0.5..0.5))
}

/// Mean loss plus the activation pattern of every sample.
fn total_loss(model: &ModelParams<f64>, samples: &[Sample], pruning: &PruningConfig, domain: usize) -> (f64, Vec<usize>) {
    let mut total = 0.0;
    let mut pattern = Vec::new();
    for s in samples {
        let mut mode = PruneMode::Fixed {
            config: *pruning,
            selection: &s.selection,
        };
        let (flat, trace) = model.forward_traced(s.rgb.view(), s.thermal.view(), &mut mode).unwrap();
        let x = flat.insert_axis(Axis(0));
        let (logits, head) = model.head.logits_traced(x.view(), domain).unwrap();
        total += loss(logits.view(), &[s.label]);
        pattern.extend(trace.activation_pattern());
        pattern.extend(head.activation_pattern());
    }
    (total / samples.len() as f64, pattern)
}

/// Central finite differences (step `h`) against back-propagation on a
/// two-sample batch, `entries` coordinates per tensor: the largest
/// analytic entry plus random ones.
pub fn gradient_check(cfg: &NetConfig, pruning: PruningConfig, entries: usize, h: f64, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = 1;
    let mut model = ModelParams::<f64>::init(cfg, 2, Init::He, &mut rng).unwrap();
    // larger fc6 weights keep early-layer gradients well above round-off
    for b in &mut model.head.fc6 {
        b.weight.mapv_inplace(|v| v * 40.0);
        b.bias.mapv_inplace(|_| rng.random_range(-0.1..0.1));
    }
    for mut t in model.tensors_mut() {
        if t.name.ends_with("bias") && !t.name.contains("fc6") {
            t.value.mapv_inplace(|_| rng.random_range(-0.05..0.05));
        }
    }
    let size = cfg.backbone.input_size;
    let samples: Vec<Sample> = [Label::Positive, Label::Negative]
        .into_iter()
        .map(|label| {
            let rgb = random_patch(size, &mut rng);
            let thermal = random_patch(size, &mut rng);
            let fused = model.features(rgb.view(), thermal.view()).unwrap();
            let selection = if pruning.enabled {
                wrs_select(&channel_scores(fused.view()), &pruning, &mut rng).unwrap()
            } else {
                ChannelSelection::all(fused.dim().0)
            };
            Sample {
                rgb,
                thermal,
                label,
                selection,
            }
        })
        .collect();

    let mut grad = model.zeros_like();
    for s in &samples {
        let mut mode = PruneMode::Fixed {
            config: pruning,
            selection: &s.selection,
        };
        model
            .accumulate_sample(s.rgb.view(), s.thermal.view(), s.label, domain, &mut mode, samples.len(), &mut grad)
            .unwrap();
    }
    let analytic: Vec<(String, Vec<f64>)> = grad
        .tensors()
        .iter()
        .map(|t| (t.name.clone(), t.value.iter().copied().collect()))
        .collect();

    let (_, base) = total_loss(&model, &samples, &pruning, domain);
    let mut per_tensor = Vec::new();
    let mut kinks = 0;
    for (ti, (name, g)) in analytic.iter().enumerate() {
        let perturb = |m: &mut ModelParams<f64>, i: usize, delta: f64| {
            let mut ts = m.tensors_mut();
            let v = ts[ti].value.iter_mut().nth(i).unwrap();
            *v += delta;
        };
        // central difference, or None when the interval straddles a kink
        let numeric = |i: usize| {
            let mut m = model.clone();
            perturb(&mut m, i, h);
            let (up, pu) = total_loss(&m, &samples, &pruning, domain);
            perturb(&mut m, i, -2.0 * h);
            let (down, pd) = total_loss(&m, &samples, &pruning, domain);
            (pu == base && pd == base).then_some((up - down) / (2.0 * h))
        };
        let argmax = (0..g.len()).max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs())).unwrap();
        let want = entries.min(g.len());
        let mut tried = vec![argmax];
        let mut queue = vec![argmax];
        let mut checked = 0;
        let mut worst = 0.0f64;
        while checked < want && tried.len() <= g.len() {
            let i = match queue.pop() {
                Some(i) => i,
                None if tried.len() < g.len() => loop {
                    let i = rng.random_range(0..g.len());
                    if !tried.contains(&i) {
                        tried.push(i);
                        break i;
                    }
                },
                None => break,
            };
            match numeric(i) {
                Some(n) => {
                    let scale = g[i].abs().max(n.abs()).max(1e-7);
                    worst = worst.max((g[i] - n).abs() / scale);
                    checked += 1;
                }
                None => kinks += 1,
            }
        }
        per_tensor.push((name.clone(), worst, checked));
    }
    GradReport { per_tensor, kinks }
}
