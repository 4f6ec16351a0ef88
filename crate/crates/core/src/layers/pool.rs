use ndarray::{Array3, ArrayView3};

use crate::error::{DapError, Result};
use crate::real::Real;

/// Max pooling window; no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    in_shape: (usize, usize, usize),
    argmax: Vec<usize>,
}

impl PoolCache {
    /// Flat input index chosen by each output window.
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

impl MaxPool {
    pub fn square(kernel: usize, stride: usize) -> Self {
        MaxPool {
            kernel: (kernel, kernel),
            stride: (stride, stride),
        }
    }

    /// Window that maps an `from` grid exactly onto a `to` grid.
    ///
    /// The stride is the largest step that still fits `to` windows and the
    /// kernel absorbs the remainder, so 25 -> 11 uses kernel 5 / stride 2,
    /// 11 -> 5 uses kernel 3 / stride 2 and equal sizes give the identity.
    pub fn aligning(from: (usize, usize), to: (usize, usize)) -> Result<Self> {
        if to.0 == 0 || to.1 == 0 || to.0 > from.0 || to.1 > from.1 {
            return Err(DapError::Upsample { from, to });
        }
        let axis = |n: usize, t: usize| {
            let stride = if t == 1 { 1 } else { (n - 1) / (t - 1) };
            (n - (t - 1) * stride, stride)
        };
        let (kh, sh) = axis(from.0, to.0);
        let (kw, sw) = axis(from.1, to.1);
        Ok(MaxPool {
            kernel: (kh, kw),
            stride: (sh, sw),
        })
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        if h < self.kernel.0 || w < self.kernel.1 {
            return None;
        }
        Some((
            (h - self.kernel.0) / self.stride.0 + 1,
            (w - self.kernel.1) / self.stride.1 + 1,
        ))
    }

    pub fn forward<T: Real>(&self, x: ArrayView3<T>) -> Result<Array3<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached<T: Real>(&self, x: ArrayView3<T>) -> Result<(Array3<T>, PoolCache)> {
        let (c, h, w) = x.dim();
        let (ho, wo) = self.output_hw(h, w).ok_or(DapError::SizeMismatch {
            expected: vec![c, self.kernel.0, self.kernel.1],
            actual: vec![c, h, w],
        })?;
        let x = x.as_standard_layout();
        let src = x.as_slice().expect("standard layout");
        let mut out = Vec::with_capacity(c * ho * wo);
        let mut argmax = Vec::with_capacity(c * ho * wo);
        for ch in 0..c {
            let base = ch * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let (y0, x0) = (oy * self.stride.0, ox * self.stride.1);
                    let mut best = base + y0 * w + x0;
                    let mut best_v = src[best];
                    for yy in y0..y0 + self.kernel.0 {
                        let row = base + yy * w;
                        for (xx, &v) in src[row + x0..row + x0 + self.kernel.1].iter().enumerate() {
                            // strict comparison: first maximum wins ties
                            if v > best_v {
                                best_v = v;
                                best = row + x0 + xx;
                            }
                        }
                    }
                    out.push(best_v);
                    argmax.push(best);
                }
            }
        }
        let out = Array3::from_shape_vec((c, ho, wo), out).expect("pool shape");
        Ok((
            out,
            PoolCache {
                in_shape: (c, h, w),
                argmax,
            },
        ))
    }

    pub fn backward<T: Real>(&self, cache: &PoolCache, grad_out: ArrayView3<T>) -> Array3<T> {
        let mut grad = vec![T::zero(); cache.in_shape.0 * cache.in_shape.1 * cache.in_shape.2];
        for (&i, &g) in cache.argmax.iter().zip(grad_out.iter()) {
            grad[i] += g;
        }
        Array3::from_shape_vec(cache.in_shape, grad).expect("pool grad shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligning_windows() {
        let p = MaxPool::aligning((25, 25), (11, 11)).unwrap();
        assert_eq!(p, MaxPool::square(5, 2));
        let p = MaxPool::aligning((11, 11), (5, 5)).unwrap();
        assert_eq!(p, MaxPool::square(3, 2));
        let p = MaxPool::aligning((7, 7), (7, 7)).unwrap();
        assert_eq!(p, MaxPool::square(1, 1));
        assert!(matches!(
            MaxPool::aligning((5, 5), (6, 5)),
            Err(DapError::Upsample { .. })
        ));
        for from in 1..40 {
            for to in 1..=from {
                let p = MaxPool::aligning((from, from), (to, to)).unwrap();
                assert_eq!(p.output_hw(from, from), Some((to, to)));
            }
        }
    }

    #[test]
    fn pools_maxima_and_routes_gradient() {
        let x = Array3::from_shape_vec((1, 3, 3), vec![1.0, 5.0, 2.0, 0.0, 3.0, 9.0, 4.0, 4.0, 1.0]).unwrap();
        let pool = MaxPool::square(2, 1);
        let (y, cache) = pool.forward_cached(x.view()).unwrap();
        assert_eq!(y.into_raw_vec_and_offset().0, vec![5.0, 9.0, 4.0, 9.0]);
        let g = pool.backward(&cache, Array3::from_elem((1, 2, 2), 1.0).view());
        assert_eq!(g.into_raw_vec_and_offset().0, vec![0.0, 1.0, 0.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0]);
    }
}
