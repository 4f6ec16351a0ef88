//! Full network: shared backbone, feature fusion, pruning and head.

use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView3, ArrayViewD, ArrayViewMutD, Axis, IxDyn};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use crate::aggregation::{AggregationChain, AggregationTrace};
use crate::backbone::{BackboneConfig, BackboneParams, BackboneTrace, StageFeatures};
use crate::error::{DapError, Result};
use crate::head::{loss, loss_grad, HeadParams, Label};
use crate::pruning::{apply_mask, channel_scores, wrs_select, ChannelSelection, PruningConfig};
use crate::real::Real;

/// How the two modalities' backbone features are fused before the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    /// Dense recursive aggregation of all three stages.
    Dense,
    /// Channel concatenation of the two conv3 maps (no aggregation).
    ConcatConv3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    pub backbone: BackboneConfig,
    pub c_agg: usize,
    pub d4: usize,
    pub d5: usize,
    pub fusion: Fusion,
    pub fc_relu: bool,
}

impl NetConfig {
    pub fn full() -> Self {
        NetConfig {
            backbone: BackboneConfig::full(),
            c_agg: 512,
            d4: 512,
            d5: 512,
            fusion: Fusion::Dense,
            fc_relu: true,
        }
    }

    pub fn toy() -> Self {
        NetConfig {
            backbone: BackboneConfig::toy(),
            c_agg: 32,
            d4: 64,
            d5: 64,
            ..Self::full()
        }
    }

    /// Shape (channels, height, width) of the fused feature map.
    pub fn feature_shape(&self) -> Result<(usize, usize, usize)> {
        let f3 = self.backbone.stage_shapes()?.f3;
        let c = match self.fusion {
            Fusion::Dense => self.c_agg,
            Fusion::ConcatConv3 => 2 * self.backbone.c3,
        };
        Ok((c, f3, f3))
    }

    pub fn feature_len(&self) -> Result<usize> {
        let (c, h, w) = self.feature_shape()?;
        Ok(c * h * w)
    }
}

/// Weight initialization when no pretrained weights are supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Zero-mean Gaussian with a fixed standard deviation.
    Gaussian { std: f64 },
    /// Zero-mean Gaussian with standard deviation `sqrt(2 / fan_in)`.
    He,
}

/// Standard deviation of freshly created fc6 branches.
pub const FC6_INIT_STD: f64 = 0.01;

/// Learning-rate group of a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Backbone convolutions and aggregation 1x1 convolutions.
    Conv,
    /// fc4 and fc5.
    Fc,
    /// Domain branch `k` of fc6.
    Fc6(usize),
}

pub struct Tensor<'a, T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: ArrayViewD<'a, T>,
}

pub struct TensorMut<'a, T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: ArrayViewMutD<'a, T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: NetConfig,
    pub backbone: BackboneParams<T>,
    /// Present for [`Fusion::Dense`].
    pub aggregation: Option<AggregationChain<T>>,
    pub head: HeadParams<T>,
}

/// How the pruning module behaves in a forward pass.
pub enum PruneMode<'a> {
    Off,
    /// Fresh weighted random selection per sample.
    Random {
        config: PruningConfig,
        rng: &'a mut dyn RngCore,
    },
    /// Reuse a given selection (gradient checks).
    Fixed {
        config: PruningConfig,
        selection: &'a ChannelSelection,
    },
}

/// Per-sample record of a traced forward pass.
pub struct SampleTrace<T> {
    rgb: BackboneTrace<T>,
    thermal: BackboneTrace<T>,
    fusion: Option<AggregationTrace<T>>,
    mask: Option<Array1<T>>,
    feature_shape: (usize, usize, usize),
}

impl<T: Real> SampleTrace<T> {
    /// ReLU states and max-pool winners of both streams and the fusion
    /// chain. Inputs with equal patterns share one linear region of the
    /// non-smooth units.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.rgb.push_pattern(&mut out);
        self.thermal.push_pattern(&mut out);
        if let Some(f) = &self.fusion {
            f.push_pattern(&mut out);
        }
        out
    }
}

fn gaussian_fill<T: Real, R: Rng + ?Sized>(values: &mut ArrayViewMutD<T>, std: f64, rng: &mut R) {
    let normal = Normal::new(0.0, std).expect("finite std");
    values.mapv_inplace(|_| T::lit(normal.sample(rng)));
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(config: &NetConfig, branches: usize) -> Result<Self> {
        let bb = &config.backbone;
        let aggregation = match config.fusion {
            Fusion::Dense => Some(AggregationChain::zeros(config.c_agg, bb.c1, bb.c2, bb.c3, bb.lrn)),
            Fusion::ConcatConv3 => None,
        };
        let mut head = HeadParams::zeros(config.feature_len()?, config.d4, config.d5, branches);
        head.relu = config.fc_relu;
        Ok(ModelParams {
            config: *config,
            backbone: BackboneParams::zeros(bb),
            aggregation,
            head,
        })
    }

    /// Randomly initialized model; biases start at zero.
    pub fn init<R: Rng + ?Sized>(config: &NetConfig, branches: usize, init: Init, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(config, branches)?;
        for mut t in model.tensors_mut() {
            if t.name.ends_with("bias") {
                continue;
            }
            let std = match (t.kind, init) {
                (ParamKind::Fc6(_), _) => FC6_INIT_STD,
                (_, Init::Gaussian { std }) => std,
                (_, Init::He) => {
                    let fan_in: usize = t.value.shape()[1..].iter().product();
                    (2.0 / fan_in as f64).sqrt()
                }
            };
            gaussian_fill(&mut t.value, std, rng);
        }
        Ok(model)
    }

    /// Same architecture, all parameters zero (gradient and momentum buffers).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for mut t in z.tensors_mut() {
            t.value.fill(T::zero());
        }
        z
    }

    /// Replaces the fc6 branches with `branches` fresh Gaussian ones.
    pub fn reset_branches<R: Rng + ?Sized>(&mut self, branches: usize, rng: &mut R) {
        let d5 = self.config.d5;
        self.head.fc6 = (0..branches)
            .map(|_| {
                let mut lin = crate::layers::Linear::zeros(d5, 2);
                let normal = Normal::new(0.0, FC6_INIT_STD).expect("finite std");
                lin.weight.mapv_inplace(|_| T::lit(normal.sample(rng)));
                lin
            })
            .collect();
    }

    pub fn tensors(&self) -> Vec<Tensor<'_, T>> {
        let mut out = Vec::new();
        fn push<'a, T>(out: &mut Vec<Tensor<'a, T>>, name: String, kind: ParamKind, value: ArrayViewD<'a, T>) {
            out.push(Tensor { name, kind, value });
        }
        let convs = [
            ("conv1", &self.backbone.conv1),
            ("conv2", &self.backbone.conv2),
            ("conv3", &self.backbone.conv3),
        ];
        for (n, c) in convs {
            push(&mut out, format!("backbone.{n}.weight"), ParamKind::Conv, c.weight.view().into_dyn());
            push(&mut out, format!("backbone.{n}.bias"), ParamKind::Conv, c.bias.view().into_dyn());
        }
        if let Some(chain) = &self.aggregation {
            for (b, block) in chain.blocks.iter().enumerate() {
                for (i, w) in block.weights.iter().enumerate() {
                    push(&mut out, format!("agg.block{}.w{i}", b + 1), ParamKind::Conv, w.view().into_dyn());
                }
                push(&mut out, format!("agg.block{}.bias", b + 1), ParamKind::Conv, block.bias.view().into_dyn());
            }
        }
        push(&mut out, "head.fc4.weight".into(), ParamKind::Fc, self.head.fc4.weight.view().into_dyn());
        push(&mut out, "head.fc4.bias".into(), ParamKind::Fc, self.head.fc4.bias.view().into_dyn());
        push(&mut out, "head.fc5.weight".into(), ParamKind::Fc, self.head.fc5.weight.view().into_dyn());
        push(&mut out, "head.fc5.bias".into(), ParamKind::Fc, self.head.fc5.bias.view().into_dyn());
        for (k, b) in self.head.fc6.iter().enumerate() {
            push(&mut out, format!("head.fc6.{k}.weight"), ParamKind::Fc6(k), b.weight.view().into_dyn());
            push(&mut out, format!("head.fc6.{k}.bias"), ParamKind::Fc6(k), b.bias.view().into_dyn());
        }
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), in the same order.
    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        let mut out = Vec::new();
        let bb = &mut self.backbone;
        for (n, c) in [("conv1", &mut bb.conv1), ("conv2", &mut bb.conv2), ("conv3", &mut bb.conv3)] {
            out.push(TensorMut {
                name: format!("backbone.{n}.weight"),
                kind: ParamKind::Conv,
                value: c.weight.view_mut().into_dyn(),
            });
            out.push(TensorMut {
                name: format!("backbone.{n}.bias"),
                kind: ParamKind::Conv,
                value: c.bias.view_mut().into_dyn(),
            });
        }
        if let Some(chain) = &mut self.aggregation {
            for (b, block) in chain.blocks.iter_mut().enumerate() {
                for (i, w) in block.weights.iter_mut().enumerate() {
                    out.push(TensorMut {
                        name: format!("agg.block{}.w{i}", b + 1),
                        kind: ParamKind::Conv,
                        value: w.view_mut().into_dyn(),
                    });
                }
                out.push(TensorMut {
                    name: format!("agg.block{}.bias", b + 1),
                    kind: ParamKind::Conv,
                    value: block.bias.view_mut().into_dyn(),
                });
            }
        }
        let head = &mut self.head;
        for (n, lin) in [("fc4", &mut head.fc4), ("fc5", &mut head.fc5)] {
            out.push(TensorMut {
                name: format!("head.{n}.weight"),
                kind: ParamKind::Fc,
                value: lin.weight.view_mut().into_dyn(),
            });
            out.push(TensorMut {
                name: format!("head.{n}.bias"),
                kind: ParamKind::Fc,
                value: lin.bias.view_mut().into_dyn(),
            });
        }
        for (k, b) in head.fc6.iter_mut().enumerate() {
            out.push(TensorMut {
                name: format!("head.fc6.{k}.weight"),
                kind: ParamKind::Fc6(k),
                value: b.weight.view_mut().into_dyn(),
            });
            out.push(TensorMut {
                name: format!("head.fc6.{k}.bias"),
                kind: ParamKind::Fc6(k),
                value: b.bias.view_mut().into_dyn(),
            });
        }
        out
    }

    /// Converts every parameter to another element type.
    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(&self.config, self.head.branches()).expect("validated config");
        for (dst, src) in out.tensors_mut().iter_mut().zip(self.tensors()) {
            dst.value.zip_mut_with(&src.value, |d, &s| *d = U::lit(s.as_f64()));
        }
        out
    }

    /// Fused (unpruned) feature map of one RGB/thermal patch pair.
    pub fn features(&self, rgb: ArrayView3<T>, thermal: ArrayView3<T>) -> Result<Array3<T>> {
        let fr = self.backbone.extract(rgb)?;
        let ft = self.backbone.extract(thermal)?;
        self.fuse(&fr, &ft)
    }

    pub fn fuse(&self, rgb: &StageFeatures<T>, thermal: &StageFeatures<T>) -> Result<Array3<T>> {
        match &self.aggregation {
            Some(chain) => chain.forward(rgb, thermal),
            None => Ok(concatenate(Axis(0), &[rgb.f3.view(), thermal.f3.view()]).expect("matching conv3 maps")),
        }
    }

    /// Traced forward pass up to the flattened, pruned head input.
    pub fn forward_traced(
        &self,
        rgb: ArrayView3<T>,
        thermal: ArrayView3<T>,
        prune: &mut PruneMode<'_>,
    ) -> Result<(Array1<T>, SampleTrace<T>)> {
        let (fr, rgb_trace) = self.backbone.extract_traced(rgb)?;
        let (ft, t_trace) = self.backbone.extract_traced(thermal)?;
        let (mut fused, fusion) = match &self.aggregation {
            Some(chain) => {
                let (a3, tr) = chain.forward_traced(&fr, &ft)?;
                (a3, Some(tr))
            }
            None => (
                concatenate(Axis(0), &[fr.f3.view(), ft.f3.view()]).expect("matching conv3 maps"),
                None,
            ),
        };
        let mask = match prune {
            PruneMode::Off => None,
            PruneMode::Random { config, rng } => {
                if !config.enabled {
                    None
                } else {
                    match wrs_select(&channel_scores(fused.view()), config, &mut **rng) {
                        Ok(sel) => Some(sel.mask(config)),
                        // an all-zero map: masking changes neither output nor gradient
                        Err(DapError::DegenerateScores) => None,
                        Err(e) => return Err(e),
                    }
                }
            }
            PruneMode::Fixed { config, selection } => {
                if !config.enabled {
                    None
                } else if selection.channels() != fused.dim().0 {
                    return Err(DapError::ChannelMismatch {
                        index: 0,
                        expected: selection.channels(),
                        actual: fused.dim().0,
                    });
                } else {
                    Some(selection.mask(config))
                }
            }
        };
        if let Some(m) = &mask {
            apply_mask(&mut fused, m);
        }
        let feature_shape = fused.dim();
        let flat = Array1::from_iter(fused.iter().copied());
        Ok((
            flat,
            SampleTrace {
                rgb: rgb_trace,
                thermal: t_trace,
                fusion,
                mask,
                feature_shape,
            },
        ))
    }

    /// Back-propagates a head-input gradient through pruning, fusion and
    /// both backbone passes into `grad`.
    pub fn backward_features(&self, trace: &SampleTrace<T>, grad_flat: Array1<T>, grad: &mut ModelParams<T>) {
        let mut g = grad_flat
            .into_shape_with_order(trace.feature_shape)
            .expect("feature gradient shape");
        if let Some(m) = &trace.mask {
            apply_mask(&mut g, m);
        }
        let (gr, gt) = match (&self.aggregation, &trace.fusion) {
            (Some(chain), Some(tr)) => chain.backward(tr, g.view(), grad.aggregation.as_mut().expect("same architecture")),
            _ => {
                let c3 = self.config.backbone.c3;
                let split = |r: std::ops::Range<usize>| g.slice(s![r, .., ..]).to_owned();
                let zeros = |like: &StageFeatures<T>| StageFeatures {
                    f1: Array3::zeros(like.f1.dim()),
                    f2: Array3::zeros(like.f2.dim()),
                    f3: Array3::zeros(like.f3.dim()),
                };
                let shapes = self.stage_dims();
                let mut gr = zeros(&shapes);
                let mut gt = zeros(&shapes);
                gr.f3 = split(0..c3);
                gt.f3 = split(c3..2 * c3);
                (gr, gt)
            }
        };
        self.backbone.backward(&trace.rgb, gr, &mut grad.backbone);
        self.backbone.backward(&trace.thermal, gt, &mut grad.backbone);
    }

    fn stage_dims(&self) -> StageFeatures<T> {
        let cfg = &self.config.backbone;
        let s = cfg.stage_shapes().expect("validated config");
        StageFeatures {
            f1: Array3::zeros((cfg.c1, s.f1, s.f1)),
            f2: Array3::zeros((cfg.c2, s.f2, s.f2)),
            f3: Array3::zeros((cfg.c3, s.f3, s.f3)),
        }
    }

    /// Forward and backward pass of one labelled sample. Gradients of the
    /// mean loss over a batch of `normalizer` samples accumulate into `grad`;
    /// returns this sample's cross-entropy.
    #[allow(clippy::too_many_arguments)]
    pub fn accumulate_sample(
        &self,
        rgb: ArrayView3<T>,
        thermal: ArrayView3<T>,
        label: Label,
        domain: usize,
        prune: &mut PruneMode<'_>,
        normalizer: usize,
        grad: &mut ModelParams<T>,
    ) -> Result<f64> {
        let (flat, trace) = self.forward_traced(rgb, thermal, prune)?;
        let x = flat.insert_axis(Axis(0));
        let (logits, head_trace) = self.head.logits_traced(x.view(), domain)?;
        let sample_loss = loss(logits.view(), &[label]);
        let g = loss_grad(logits.view(), &[label], normalizer);
        let gx: Array2<T> = self.head.backward(&head_trace, g.view(), &mut grad.head);
        let gx = gx.index_axis_move(Axis(0), 0);
        self.backward_features(&trace, gx, grad);
        Ok(sample_loss)
    }

    /// Sum of squares of every parameter (or gradient) entry.
    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| t.value.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>())
            .sum()
    }

    /// Copies a tensor by name into the model; shapes must match.
    pub fn set_tensor(&mut self, name: &str, shape: &[usize], values: &[f32]) -> Result<()> {
        let mut found = false;
        for mut t in self.tensors_mut() {
            if t.name == name {
                if t.value.shape() != shape {
                    return Err(DapError::SizeMismatch {
                        expected: t.value.shape().to_vec(),
                        actual: shape.to_vec(),
                    });
                }
                let src = ArrayViewD::from_shape(IxDyn(shape), values).expect("checked shape");
                t.value.zip_mut_with(&src, |d, &s| *d = T::lit(s as f64));
                found = true;
            }
        }
        if found {
            Ok(())
        } else {
            Err(DapError::Config(format!("unknown parameter {name:?}")))
        }
    }
}
