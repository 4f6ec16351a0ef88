//! Shared three-stage convolutional feature extractor.
//!
//! One parameter set serves both modalities: the RGB patch and the
//! thermal patch (replicated to three channels) go through the same
//! [`BackboneParams`].
//!
//! ```text
//! conv1 7x7/2 -> ReLU -> LRN -> maxpool 3x3/2   => F1
//! conv2 5x5/2 -> ReLU -> LRN                    => F2
//! conv3 3x3/1 dilation 3 -> ReLU                => F3
//! ```

use ndarray::{Array3, ArrayView3};

use crate::error::{DapError, Result};
use crate::layers::{relu_backward_inplace, relu_inplace, Conv2d, ConvCache, Lrn, LrnCache, MaxPool, PoolCache};
use crate::real::Real;

pub const INPUT_CHANNELS: usize = 3;
pub const STAGE3_DILATION: usize = 3;

/// Channel widths and input size of the backbone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackboneConfig {
    pub input_size: usize,
    pub c1: usize,
    pub c2: usize,
    pub c3: usize,
    pub lrn: Lrn,
}

impl BackboneConfig {
    /// VGG-M widths at the 107 px input size.
    pub fn full() -> Self {
        BackboneConfig {
            input_size: 107,
            c1: 96,
            c2: 256,
            c3: 512,
            lrn: Lrn::default(),
        }
    }

    pub fn toy() -> Self {
        BackboneConfig {
            c1: 8,
            c2: 16,
            c3: 32,
            ..Self::full()
        }
    }

    /// Spatial sizes of every stage for this input size.
    pub fn stage_shapes(&self) -> Result<StageShapes> {
        let bad = || DapError::Config(format!("input size {} too small for the backbone", self.input_size));
        let conv = |n, k, s, d| crate::layers::conv_output_len(n, k, s, d).ok_or_else(bad);
        let conv1 = conv(self.input_size, 7, 2, 1)?;
        let f1 = conv(conv1, 3, 2, 1)?;
        let f2 = conv(f1, 5, 2, 1)?;
        let f3 = conv(f2, 3, 1, STAGE3_DILATION)?;
        Ok(StageShapes { conv1, f1, f2, f3 })
    }
}

/// Square spatial extents of the backbone stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageShapes {
    /// Raw conv1 output before pooling.
    pub conv1: usize,
    pub f1: usize,
    pub f2: usize,
    pub f3: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub conv3: Conv2d<T>,
    pub lrn: Lrn,
    pub input_size: usize,
}

/// Stage outputs of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFeatures<T> {
    pub f1: Array3<T>,
    pub f2: Array3<T>,
    pub f3: Array3<T>,
}

#[derive(Debug, Clone)]
pub struct BackboneTrace<T> {
    conv1: ConvCache<T>,
    relu1: Array3<T>,
    lrn1: LrnCache<T>,
    pool1: PoolCache,
    conv2: ConvCache<T>,
    relu2: Array3<T>,
    lrn2: LrnCache<T>,
    conv3: ConvCache<T>,
    relu3: Array3<T>,
}

impl<T: Real> BackboneTrace<T> {
    /// Appends the on/off state of every ReLU and the pool winners.
    pub fn push_pattern(&self, out: &mut Vec<usize>) {
        push_signs(&self.relu1, out);
        out.extend_from_slice(self.pool1.argmax());
        push_signs(&self.relu2, out);
        push_signs(&self.relu3, out);
    }
}

pub(crate) fn push_signs<'a, T: Real, I: IntoIterator<Item = &'a T>>(values: I, out: &mut Vec<usize>) {
    out.extend(values.into_iter().map(|&v| usize::from(v > T::zero())));
}

const POOL1: MaxPool = MaxPool {
    kernel: (3, 3),
    stride: (2, 2),
};

impl<T: Real> BackboneParams<T> {
    pub fn zeros(cfg: &BackboneConfig) -> Self {
        BackboneParams {
            conv1: Conv2d::zeros(cfg.c1, INPUT_CHANNELS, 7, 2, 1),
            conv2: Conv2d::zeros(cfg.c2, cfg.c1, 5, 2, 1),
            conv3: Conv2d::zeros(cfg.c3, cfg.c2, 3, 1, STAGE3_DILATION),
            lrn: cfg.lrn,
            input_size: cfg.input_size,
        }
    }

    pub fn config(&self) -> BackboneConfig {
        BackboneConfig {
            input_size: self.input_size,
            c1: self.conv1.out_channels(),
            c2: self.conv2.out_channels(),
            c3: self.conv3.out_channels(),
            lrn: self.lrn,
        }
    }

    fn check_patch(&self, patch: &ArrayView3<T>) -> Result<()> {
        let expected = [INPUT_CHANNELS, self.input_size, self.input_size];
        if patch.shape() != expected {
            return Err(DapError::SizeMismatch {
                expected: expected.to_vec(),
                actual: patch.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn extract(&self, patch: ArrayView3<T>) -> Result<StageFeatures<T>> {
        self.check_patch(&patch)?;
        let mut x = self.conv1.forward(patch)?;
        relu_inplace(&mut x);
        let x = self.lrn.forward(x.view());
        let f1 = POOL1.forward(x.view())?;
        let mut x = self.conv2.forward(f1.view())?;
        relu_inplace(&mut x);
        let f2 = self.lrn.forward(x.view());
        let mut f3 = self.conv3.forward(f2.view())?;
        relu_inplace(&mut f3);
        Ok(StageFeatures { f1, f2, f3 })
    }

    pub fn extract_traced(&self, patch: ArrayView3<T>) -> Result<(StageFeatures<T>, BackboneTrace<T>)> {
        self.check_patch(&patch)?;
        let (mut x, conv1) = self.conv1.forward_cached(patch)?;
        relu_inplace(&mut x);
        let relu1 = x.clone();
        let (x, lrn1) = self.lrn.forward_cached(x);
        let (f1, pool1) = POOL1.forward_cached(x.view())?;
        let (mut x, conv2) = self.conv2.forward_cached(f1.view())?;
        relu_inplace(&mut x);
        let relu2 = x.clone();
        let (f2, lrn2) = self.lrn.forward_cached(x);
        let (mut f3, conv3) = self.conv3.forward_cached(f2.view())?;
        relu_inplace(&mut f3);
        let trace = BackboneTrace {
            conv1,
            relu1,
            lrn1,
            pool1,
            conv2,
            relu2,
            lrn2,
            conv3,
            relu3: f3.clone(),
        };
        Ok((StageFeatures { f1, f2, f3 }, trace))
    }

    /// Back-propagates gradients arriving at F1, F2 and F3 into `grad`.
    pub fn backward(&self, trace: &BackboneTrace<T>, grads: StageFeatures<T>, grad: &mut BackboneParams<T>) {
        let StageFeatures { f1: g1, f2: mut g2, f3: mut g3 } = grads;
        relu_backward_inplace(&mut g3, &trace.relu3);
        let from3 = self
            .conv3
            .backward(&trace.conv3, g3.view(), &mut grad.conv3, true)
            .expect("input grad requested");
        g2 += &from3;
        let mut g = self.lrn.backward(&trace.lrn2, g2.view());
        relu_backward_inplace(&mut g, &trace.relu2);
        let mut gf1 = self
            .conv2
            .backward(&trace.conv2, g.view(), &mut grad.conv2, true)
            .expect("input grad requested");
        gf1 += &g1;
        let g = POOL1.backward(&trace.pool1, gf1.view());
        let mut g = self.lrn.backward(&trace.lrn1, g.view());
        relu_backward_inplace(&mut g, &trace.relu1);
        self.conv1.backward(&trace.conv1, g.view(), &mut grad.conv1, false);
    }
}
