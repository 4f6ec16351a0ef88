use ndarray::{Array3, ArrayView3};

use crate::real::Real;

/// Cross-channel local response normalization:
/// `out_c = a_c * (k + alpha/n * sum_{j in window(c)} a_j^2)^(-beta)`,
/// where the window spans channels `c - n/2 ..= c + (n-1)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lrn {
    pub size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl Default for Lrn {
    fn default() -> Self {
        Lrn {
            size: 5,
            alpha: 1e-4,
            beta: 0.75,
            k: 2.0,
        }
    }
}

/// Forward-pass values needed by [`Lrn::backward`].
#[derive(Debug, Clone)]
pub struct LrnCache<T> {
    input: Array3<T>,
    scale: Array3<T>,
    /// `scale^(-beta)`.
    factor: Array3<T>,
    output: Array3<T>,
}

impl Lrn {
    fn before(&self) -> usize {
        self.size / 2
    }

    fn after(&self) -> usize {
        (self.size - 1) / 2
    }

    fn scale<T: Real>(&self, x: &ArrayView3<T>) -> Array3<T> {
        let (c, _, _) = x.dim();
        let sq = x.mapv(|v| v * v);
        let coef = T::lit(self.alpha / self.size as f64);
        let mut scale = Array3::from_elem(x.dim(), T::lit(self.k));
        for ch in 0..c {
            let lo = ch.saturating_sub(self.before());
            let hi = (ch + self.after()).min(c - 1);
            let mut dst = scale.index_axis_mut(ndarray::Axis(0), ch);
            for j in lo..=hi {
                dst.scaled_add(coef, &sq.index_axis(ndarray::Axis(0), j));
            }
        }
        scale
    }

    /// `s^(-beta)`, with a cheaper exact-enough path for the usual 0.75.
    fn factor<T: Real>(&self, scale: &Array3<T>) -> Array3<T> {
        if self.beta == 0.75 {
            scale.mapv(|s| {
                let r = s.sqrt();
                T::one() / (r * r.sqrt())
            })
        } else {
            let beta = T::lit(self.beta);
            scale.mapv(|s| s.powf(-beta))
        }
    }

    pub fn forward<T: Real>(&self, x: ArrayView3<T>) -> Array3<T> {
        let factor = self.factor(&self.scale(&x));
        let mut out = x.to_owned();
        out *= &factor;
        out
    }

    pub fn forward_cached<T: Real>(&self, x: Array3<T>) -> (Array3<T>, LrnCache<T>) {
        let scale = self.scale(&x.view());
        let factor = self.factor(&scale);
        let mut out = x.clone();
        out *= &factor;
        (
            out.clone(),
            LrnCache {
                input: x,
                scale,
                factor,
                output: out,
            },
        )
    }

    pub fn backward<T: Real>(&self, cache: &LrnCache<T>, grad_out: ArrayView3<T>) -> Array3<T> {
        let (c, _, _) = grad_out.dim();
        // t_c = g_c * out_c / S_c, the shared factor of the cross terms
        let mut t = grad_out.to_owned();
        ndarray::Zip::from(&mut t)
            .and(&cache.output)
            .and(&cache.scale)
            .for_each(|t, &o, &s| *t = *t * o / s);
        let mut grad = grad_out.to_owned();
        grad *= &cache.factor;
        let coef = T::lit(2.0 * self.alpha * self.beta / self.size as f64);
        for j in 0..c {
            // channels c whose window contains j
            let lo = j.saturating_sub(self.after());
            let hi = (j + self.before()).min(c - 1);
            let mut acc = t.index_axis(ndarray::Axis(0), lo).to_owned();
            for ch in lo + 1..=hi {
                acc += &t.index_axis(ndarray::Axis(0), ch);
            }
            acc *= &cache.input.index_axis(ndarray::Axis(0), j);
            grad.index_axis_mut(ndarray::Axis(0), j).scaled_add(-coef, &acc);
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_direct_formula() {
        let lrn = Lrn {
            size: 5,
            alpha: 0.3,
            beta: 0.75,
            k: 2.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Array3<f64> = Array::from_shape_simple_fn((7, 3, 2), || rng.random_range(-2.0..2.0));
        let y = lrn.forward(x.view());
        for c in 0..7usize {
            for i in 0..3 {
                for j in 0..2 {
                    let lo = c.saturating_sub(2);
                    let hi = (c + 2).min(6);
                    let s: f64 = (lo..=hi).map(|q| x[[q, i, j]].powi(2)).sum();
                    let want = x[[c, i, j]] / (2.0 + 0.3 / 5.0 * s).powf(0.75);
                    assert!((y[[c, i, j]] - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for size in [4usize, 5] {
            let lrn = Lrn {
                size,
                alpha: 0.5,
                beta: 0.75,
                k: 1.0,
            };
            let x: Array3<f64> = Array::from_shape_simple_fn((6, 2, 3), || rng.random_range(-2.0..2.0));
            let probe: Array3<f64> = Array::from_shape_simple_fn((6, 2, 3), || rng.random_range(-1.0..1.0));
            let (_, cache) = lrn.forward_cached(x.clone());
            let g = lrn.backward(&cache, probe.view());
            let h = 1e-6;
            for idx in [[0, 0, 0], [3, 1, 2], [5, 0, 1], [2, 1, 0]] {
                let mut xp = x.clone();
                xp[idx] += h;
                let mut xm = x.clone();
                xm[idx] -= h;
                let fd = ((lrn.forward(xp.view()) - lrn.forward(xm.view())) * &probe).sum() / (2.0 * h);
                assert!((fd - g[idx]).abs() < 1e-7, "size {size} idx {idx:?}: {fd} vs {}", g[idx]);
            }
        }
    }
}
