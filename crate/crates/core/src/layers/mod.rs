//! Differentiable building blocks with hand-written backward passes.

mod conv;
mod lrn;
mod pool;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array, Array1, Array2, ArrayView1, ArrayView2, Axis, Dimension};

pub use conv::{conv_output_len, Conv2d, ConvCache};
pub use lrn::{Lrn, LrnCache};
pub use pool::{MaxPool, PoolCache};

use crate::real::Real;

pub fn relu_inplace<T: Real, D: Dimension>(x: &mut Array<T, D>) {
    x.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub fn relu_backward_inplace<T: Real, D: Dimension>(grad: &mut Array<T, D>, output: &Array<T, D>) {
    grad.zip_mut_with(output, |g, &o| {
        if o <= T::zero() {
            *g = T::zero()
        }
    });
}

/// Fully connected layer, weights laid out as (out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    /// Row-batched forward: `x` is (batch, in).
    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut out = Array2::zeros((x.nrows(), self.outputs()));
        general_mat_mul(T::one(), &x, &self.weight.t(), T::zero(), &mut out);
        out += &self.bias;
        out
    }

    pub fn forward_one(&self, x: ArrayView1<T>) -> Array1<T> {
        self.weight.dot(&x) + &self.bias
    }

    /// Accumulates into `grad` and returns the input gradient (batch, in).
    pub fn backward(&self, x: ArrayView2<T>, grad_out: ArrayView2<T>, grad: &mut Linear<T>) -> Array2<T> {
        general_mat_mul(T::one(), &grad_out.t(), &x, T::one(), &mut grad.weight);
        grad.bias += &grad_out.sum_axis(Axis(0));
        grad_out.dot(&self.weight)
    }
}

/// Numerically stable two-class softmax; returns (positive, negative)
/// for logits laid out as (negative, positive).
pub fn softmax_pair<T: Real>(neg: T, pos: T) -> (T, T) {
    let m = if neg > pos { neg } else { pos };
    let en = (neg - m).exp();
    let ep = (pos - m).exp();
    let z = en + ep;
    (ep / z, en / z)
}

/// Row-wise softmax of a (batch, classes) logit matrix.
pub fn softmax_rows<T: Real>(logits: ArrayView2<T>) -> Array2<T> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let m = row.fold(T::neg_infinity(), |a, &b| if b > a { b } else { a });
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    out
}
