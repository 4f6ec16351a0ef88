//! Dense recursive aggregation of both modalities' backbone stages.
//!
//! Each block computes `LRN(ReLU(sum_i W_i * x_i + b))` with 1x1
//! convolutions `W_i`, one per input branch. The chain is
//!
//! ```text
//! A1 = block1([F1_rgb, F1_t])
//! A2 = block2([pool(A1), F2_rgb, F2_t])
//! A3 = block3([pool(A2), F3_rgb, F3_t])
//! ```
//!
//! where `pool` is the max pooling that maps the previous block onto the
//! next stage's grid.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};

use crate::backbone::StageFeatures;
use crate::error::{DapError, Result};
use crate::layers::{relu_backward_inplace, relu_inplace, Lrn, LrnCache, MaxPool, PoolCache};
use crate::real::Real;

/// One aggregation block: a 1x1 convolution per input plus a shared bias.
#[derive(Debug, Clone, PartialEq)]
pub struct AggBlockParams<T> {
    /// `weights[i]` has shape (C_agg, channels of input i).
    pub weights: Vec<Array2<T>>,
    pub bias: Array1<T>,
    pub lrn: Lrn,
}

#[derive(Debug, Clone)]
pub struct AggBlockCache<T> {
    inputs: Vec<Array3<T>>,
    relu: Array3<T>,
    lrn: LrnCache<T>,
}

impl<T: Real> AggBlockParams<T> {
    pub fn zeros(out_channels: usize, input_channels: &[usize], lrn: Lrn) -> Self {
        AggBlockParams {
            weights: input_channels
                .iter()
                .map(|&c| Array2::zeros((out_channels, c)))
                .collect(),
            bias: Array1::zeros(out_channels),
            lrn,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.bias.len()
    }

    fn check(&self, inputs: &[ArrayView3<T>]) -> Result<(usize, usize)> {
        if inputs.len() != self.weights.len() {
            return Err(DapError::CountMismatch {
                what: "aggregation block inputs".into(),
                left: inputs.len(),
                right: self.weights.len(),
            });
        }
        let (_, h, w) = inputs[0].dim();
        for (index, (x, wt)) in inputs.iter().zip(&self.weights).enumerate() {
            let (c, xh, xw) = x.dim();
            if (xh, xw) != (h, w) {
                return Err(DapError::SpatialMismatch {
                    index,
                    expected: (h, w),
                    actual: (xh, xw),
                });
            }
            if c != wt.ncols() {
                return Err(DapError::ChannelMismatch {
                    index,
                    expected: wt.ncols(),
                    actual: c,
                });
            }
        }
        Ok((h, w))
    }

    /// `sum_i W_i * x_i + b` before the nonlinearity.
    pub fn linear_part(&self, inputs: &[ArrayView3<T>]) -> Result<Array3<T>> {
        let (h, w) = self.check(inputs)?;
        let c = self.out_channels();
        let mut acc = Array2::<T>::zeros((c, h * w));
        for (x, wt) in inputs.iter().zip(&self.weights) {
            let x = x.as_standard_layout();
            let flat = x
                .view()
                .into_shape_with_order((x.dim().0, h * w))
                .expect("contiguous input");
            general_mat_mul(T::one(), wt, &flat, T::one(), &mut acc);
        }
        for (mut row, &b) in acc.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        Ok(acc.into_shape_with_order((c, h, w)).expect("block output"))
    }

    pub fn forward(&self, inputs: &[ArrayView3<T>]) -> Result<Array3<T>> {
        let mut x = self.linear_part(inputs)?;
        relu_inplace(&mut x);
        Ok(self.lrn.forward(x.view()))
    }

    pub fn forward_cached(&self, inputs: Vec<Array3<T>>) -> Result<(Array3<T>, AggBlockCache<T>)> {
        let views: Vec<_> = inputs.iter().map(|x| x.view()).collect();
        let mut x = self.linear_part(&views)?;
        relu_inplace(&mut x);
        let relu = x.clone();
        let (out, lrn) = self.lrn.forward_cached(x);
        Ok((out, AggBlockCache { inputs, relu, lrn }))
    }

    /// Accumulates into `grad`; returns one input gradient per branch.
    pub fn backward(&self, cache: &AggBlockCache<T>, grad_out: ArrayView3<T>, grad: &mut AggBlockParams<T>) -> Vec<Array3<T>> {
        let mut g = self.lrn.backward(&cache.lrn, grad_out);
        relu_backward_inplace(&mut g, &cache.relu);
        let (c, h, w) = g.dim();
        let g = g.into_shape_with_order((c, h * w)).expect("block grad");
        grad.bias += &g.sum_axis(Axis(1));
        cache
            .inputs
            .iter()
            .zip(&self.weights)
            .zip(grad.weights.iter_mut())
            .map(|((x, wt), gw)| {
                let ci = x.dim().0;
                let flat: ArrayView2<T> = x.view().into_shape_with_order((ci, h * w)).expect("contiguous input");
                general_mat_mul(T::one(), &g, &flat.t(), T::one(), gw);
                wt.t()
                    .dot(&g)
                    .into_shape_with_order((ci, h, w))
                    .expect("input grad")
            })
            .collect()
    }
}

/// Free-function form of [`AggBlockParams::forward`].
pub fn agg_block<T: Real>(inputs: &[ArrayView3<T>], params: &AggBlockParams<T>) -> Result<Array3<T>> {
    params.forward(inputs)
}

/// Max-pools `x` onto a `(target_h, target_w)` grid.
pub fn align_scale<T: Real>(x: ArrayView3<T>, target_h: usize, target_w: usize) -> Result<Array3<T>> {
    let (_, h, w) = x.dim();
    MaxPool::aligning((h, w), (target_h, target_w))?.forward(x)
}

/// The three-block aggregation chain.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationChain<T> {
    pub blocks: Vec<AggBlockParams<T>>,
}

#[derive(Debug, Clone)]
pub struct AggregationTrace<T> {
    blocks: Vec<AggBlockCache<T>>,
    pools: Vec<(MaxPool, PoolCache)>,
}

impl<T: Real> AggregationTrace<T> {
    pub fn push_pattern(&self, out: &mut Vec<usize>) {
        for b in &self.blocks {
            crate::backbone::push_signs(&b.relu, out);
        }
        for (_, p) in &self.pools {
            out.extend_from_slice(p.argmax());
        }
    }
}

impl<T: Real> AggregationChain<T> {
    pub fn zeros(c_agg: usize, c1: usize, c2: usize, c3: usize, lrn: Lrn) -> Self {
        AggregationChain {
            blocks: vec![
                AggBlockParams::zeros(c_agg, &[c1, c1], lrn),
                AggBlockParams::zeros(c_agg, &[c_agg, c2, c2], lrn),
                AggBlockParams::zeros(c_agg, &[c_agg, c3, c3], lrn),
            ],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.blocks[2].out_channels()
    }

    /// Returns every block output `[A1, A2, A3]`.
    pub fn stages(&self, rgb: &StageFeatures<T>, t: &StageFeatures<T>) -> Result<Vec<Array3<T>>> {
        let a1 = self.blocks[0].forward(&[rgb.f1.view(), t.f1.view()])?;
        let (_, h2, w2) = rgb.f2.dim();
        let p1 = align_scale(a1.view(), h2, w2)?;
        let a2 = self.blocks[1].forward(&[p1.view(), rgb.f2.view(), t.f2.view()])?;
        let (_, h3, w3) = rgb.f3.dim();
        let p2 = align_scale(a2.view(), h3, w3)?;
        let a3 = self.blocks[2].forward(&[p2.view(), rgb.f3.view(), t.f3.view()])?;
        Ok(vec![a1, a2, a3])
    }

    pub fn forward(&self, rgb: &StageFeatures<T>, t: &StageFeatures<T>) -> Result<Array3<T>> {
        Ok(self.stages(rgb, t)?.pop().expect("three stages"))
    }

    pub fn forward_traced(&self, rgb: &StageFeatures<T>, t: &StageFeatures<T>) -> Result<(Array3<T>, AggregationTrace<T>)> {
        let (a1, c1) = self.blocks[0].forward_cached(vec![rgb.f1.clone(), t.f1.clone()])?;
        let (_, h2, w2) = rgb.f2.dim();
        let pool1 = MaxPool::aligning((a1.dim().1, a1.dim().2), (h2, w2))?;
        let (p1, pc1) = pool1.forward_cached(a1.view())?;
        let (a2, c2) = self.blocks[1].forward_cached(vec![p1, rgb.f2.clone(), t.f2.clone()])?;
        let (_, h3, w3) = rgb.f3.dim();
        let pool2 = MaxPool::aligning((a2.dim().1, a2.dim().2), (h3, w3))?;
        let (p2, pc2) = pool2.forward_cached(a2.view())?;
        let (a3, c3) = self.blocks[2].forward_cached(vec![p2, rgb.f3.clone(), t.f3.clone()])?;
        Ok((
            a3,
            AggregationTrace {
                blocks: vec![c1, c2, c3],
                pools: vec![(pool1, pc1), (pool2, pc2)],
            },
        ))
    }

    /// Returns the gradients with respect to the RGB and thermal stages.
    pub fn backward(
        &self,
        trace: &AggregationTrace<T>,
        grad_out: ArrayView3<T>,
        grad: &mut AggregationChain<T>,
    ) -> (StageFeatures<T>, StageFeatures<T>) {
        let mut g3 = self.blocks[2].backward(&trace.blocks[2], grad_out, &mut grad.blocks[2]).into_iter();
        let (gp2, g3r, g3t) = (g3.next().unwrap(), g3.next().unwrap(), g3.next().unwrap());
        let (pool2, pc2) = &trace.pools[1];
        let ga2 = pool2.backward(pc2, gp2.view());
        let mut g2 = self.blocks[1].backward(&trace.blocks[1], ga2.view(), &mut grad.blocks[1]).into_iter();
        let (gp1, g2r, g2t) = (g2.next().unwrap(), g2.next().unwrap(), g2.next().unwrap());
        let (pool1, pc1) = &trace.pools[0];
        let ga1 = pool1.backward(pc1, gp1.view());
        let mut g1 = self.blocks[0].backward(&trace.blocks[0], ga1.view(), &mut grad.blocks[0]).into_iter();
        let (g1r, g1t) = (g1.next().unwrap(), g1.next().unwrap());
        (
            StageFeatures {
                f1: g1r,
                f2: g2r,
                f3: g3r,
            },
            StageFeatures {
                f1: g1t,
                f2: g2t,
                f3: g3t,
            },
        )
    }
}
