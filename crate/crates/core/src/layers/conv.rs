use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array3, Array4, ArrayView3, Axis};

use crate::error::{DapError, Result};
use crate::real::Real;

/// Output length of a valid (unpadded) convolution along one axis.
pub fn conv_output_len(input: usize, kernel: usize, stride: usize, dilation: usize) -> Option<usize> {
    let span = dilation * (kernel - 1) + 1;
    if input < span || stride == 0 {
        None
    } else {
        Some((input - span) / stride + 1)
    }
}

/// Unpadded 2-D convolution with stride and dilation, weights laid out as
/// (out channels, in channels, kernel h, kernel w).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Array4<T>,
    pub bias: Array1<T>,
    pub stride: usize,
    pub dilation: usize,
}

/// Values a convolution keeps from its forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    cols: Array2<T>,
    in_shape: (usize, usize, usize),
    out_hw: (usize, usize),
}

impl<T: Real> Conv2d<T> {
    pub fn zeros(out_ch: usize, in_ch: usize, kernel: usize, stride: usize, dilation: usize) -> Self {
        Conv2d {
            weight: Array4::zeros((out_ch, in_ch, kernel, kernel)),
            bias: Array1::zeros(out_ch),
            stride,
            dilation,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().0
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim().1
    }

    pub fn kernel(&self) -> (usize, usize) {
        let (_, _, kh, kw) = self.weight.dim();
        (kh, kw)
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (kh, kw) = self.kernel();
        Some((
            conv_output_len(h, kh, self.stride, self.dilation)?,
            conv_output_len(w, kw, self.stride, self.dilation)?,
        ))
    }

    fn check_input(&self, x: &ArrayView3<T>) -> Result<(usize, usize)> {
        let (c, h, w) = x.dim();
        if c != self.in_channels() {
            return Err(DapError::ChannelMismatch {
                index: 0,
                expected: self.in_channels(),
                actual: c,
            });
        }
        self.output_hw(h, w).ok_or_else(|| DapError::SizeMismatch {
            expected: vec![c, self.kernel().0, self.kernel().1],
            actual: vec![c, h, w],
        })
    }

    fn weight_matrix(&self) -> ndarray::ArrayView2<'_, T> {
        let (o, i, kh, kw) = self.weight.dim();
        self.weight
            .view()
            .into_shape_with_order((o, i * kh * kw))
            .expect("standard-layout weights")
    }

    pub fn forward(&self, x: ArrayView3<T>) -> Result<Array3<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: ArrayView3<T>) -> Result<(Array3<T>, ConvCache<T>)> {
        let (ho, wo) = self.check_input(&x)?;
        let (kh, kw) = self.kernel();
        let cols = im2col(&x, kh, kw, self.stride, self.dilation, ho, wo);
        let out_ch = self.out_channels();
        let mut out = Array2::<T>::zeros((out_ch, ho * wo));
        general_mat_mul(T::one(), &self.weight_matrix(), &cols, T::zero(), &mut out);
        for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        let out = out
            .into_shape_with_order((out_ch, ho, wo))
            .expect("contiguous conv output");
        Ok((
            out,
            ConvCache {
                cols,
                in_shape: x.dim(),
                out_hw: (ho, wo),
            },
        ))
    }

    /// Accumulates parameter gradients into `grad` and, when requested,
    /// returns the gradient with respect to the input.
    pub fn backward(
        &self,
        cache: &ConvCache<T>,
        grad_out: ArrayView3<T>,
        grad: &mut Conv2d<T>,
        input_grad: bool,
    ) -> Option<Array3<T>> {
        let out_ch = self.out_channels();
        let (ho, wo) = cache.out_hw;
        let g = grad_out
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((out_ch, ho * wo))
            .expect("conv grad shape");
        {
            let (o, i, kh, kw) = grad.weight.dim();
            let mut gw = grad
                .weight
                .view_mut()
                .into_shape_with_order((o, i * kh * kw))
                .expect("standard-layout weights");
            general_mat_mul(T::one(), &g, &cache.cols.t(), T::one(), &mut gw);
        }
        grad.bias += &g.sum_axis(Axis(1));
        if !input_grad {
            return None;
        }
        let k = cache.cols.dim().0;
        let mut gcols = Array2::<T>::zeros((k, ho * wo));
        general_mat_mul(T::one(), &self.weight_matrix().t(), &g, T::zero(), &mut gcols);
        let (kh, kw) = self.kernel();
        Some(col2im(&gcols, cache.in_shape, kh, kw, self.stride, self.dilation, ho, wo))
    }
}

/// Unfolds the receptive fields into a (C*kh*kw, ho*wo) matrix.
fn im2col<T: Real>(
    x: &ArrayView3<T>,
    kh: usize,
    kw: usize,
    stride: usize,
    dilation: usize,
    ho: usize,
    wo: usize,
) -> Array2<T> {
    let (c, _, _) = x.dim();
    let x = x.as_standard_layout();
    let (_, h, w) = x.dim();
    let src = x.as_slice().expect("standard layout");
    let p = ho * wo;
    let span = (wo - 1) * stride + 1;
    let mut cols = Vec::with_capacity(c * kh * kw * p);
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let x0 = kx * dilation;
                for oy in 0..ho {
                    let start = (oy * stride + ky * dilation) * w + x0;
                    let src_row = &plane[start..start + span];
                    if stride == 1 {
                        cols.extend_from_slice(src_row);
                    } else {
                        cols.extend((0..wo).map(|ox| src_row[ox * stride]));
                    }
                }
            }
        }
    }
    Array2::from_shape_vec((c * kh * kw, p), cols).expect("im2col shape")
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Real>(
    cols: &Array2<T>,
    shape: (usize, usize, usize),
    kh: usize,
    kw: usize,
    stride: usize,
    dilation: usize,
    ho: usize,
    wo: usize,
) -> Array3<T> {
    let (c, h, w) = shape;
    let mut out = vec![T::zero(); c * h * w];
    let cols = cols.as_standard_layout();
    let src = cols.as_slice().expect("standard layout");
    let p = ho * wo;
    let mut row = 0;
    for ci in 0..c {
        let plane = &mut out[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let s = &src[row * p..(row + 1) * p];
                let span = (wo - 1) * stride + 1;
                for (oy, s_row) in s.chunks_exact(wo).enumerate() {
                    let start = (oy * stride + ky * dilation) * w + kx * dilation;
                    let dst = &mut plane[start..start + span];
                    for (ox, &v) in s_row.iter().enumerate() {
                        dst[ox * stride] += v;
                    }
                }
                row += 1;
            }
        }
    }
    Array3::from_shape_vec(shape, out).expect("col2im shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random3(rng: &mut ChaCha8Rng, shape: (usize, usize, usize)) -> Array3<f64> {
        Array::from_shape_simple_fn(shape, || rng.random_range(-1.0..1.0))
    }

    /// Direct seven-loop evaluation of the convolution.
    fn naive(conv: &Conv2d<f64>, x: &Array3<f64>) -> Array3<f64> {
        let (o, i, kh, kw) = conv.weight.dim();
        let (_, h, w) = x.dim();
        let (ho, wo) = conv.output_hw(h, w).unwrap();
        let mut out = Array3::zeros((o, ho, wo));
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = conv.bias[oc];
                    for ic in 0..i {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                acc += conv.weight[[oc, ic, ky, kx]]
                                    * x[[ic, oy * conv.stride + ky * conv.dilation, ox * conv.stride + kx * conv.dilation]];
                            }
                        }
                    }
                    out[[oc, oy, ox]] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn output_lengths() {
        assert_eq!(conv_output_len(107, 7, 2, 1), Some(51));
        assert_eq!(conv_output_len(25, 5, 2, 1), Some(11));
        assert_eq!(conv_output_len(11, 3, 1, 3), Some(5));
        assert_eq!(conv_output_len(6, 3, 1, 3), None);
    }

    #[test]
    fn forward_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(stride, dilation) in &[(1, 1), (2, 1), (1, 3), (2, 2)] {
            let mut conv = Conv2d::<f64>::zeros(4, 3, 3, stride, dilation);
            conv.weight.mapv_inplace(|_| rng.random_range(-1.0..1.0));
            conv.bias.mapv_inplace(|_| rng.random_range(-1.0..1.0));
            let x = random3(&mut rng, (3, 13, 12));
            let fast = conv.forward(x.view()).unwrap();
            let slow = naive(&conv, &x);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut conv = Conv2d::<f64>::zeros(3, 2, 3, 2, 2);
        conv.weight.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        conv.bias.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        let x = random3(&mut rng, (2, 11, 10));
        let probe = random3(&mut rng, conv.forward(x.view()).unwrap().dim());
        let loss = |c: &Conv2d<f64>, x: &Array3<f64>| (c.forward(x.view()).unwrap() * &probe).sum();

        let (_, cache) = conv.forward_cached(x.view()).unwrap();
        let mut grad = Conv2d::zeros(3, 2, 3, 2, 2);
        let gx = conv.backward(&cache, probe.view(), &mut grad, true).unwrap();

        let h = 1e-6;
        for idx in [[0, 0, 0, 0], [2, 1, 2, 1], [1, 0, 1, 2]] {
            let mut p = conv.clone();
            p.weight[idx] += h;
            let mut m = conv.clone();
            m.weight[idx] -= h;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            assert!((fd - grad.weight[idx]).abs() < 1e-6);
        }
        for idx in [[0, 0, 0], [1, 4, 5], [0, 10, 9], [1, 3, 8]] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let fd = (loss(&conv, &xp) - loss(&conv, &xm)) / (2.0 * h);
            assert!((fd - gx[idx]).abs() < 1e-6);
        }
        assert!((grad.bias[1] - probe.index_axis(Axis(0), 1).sum()).abs() < 1e-12);
    }
}
