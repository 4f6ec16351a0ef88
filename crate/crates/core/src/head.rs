//! fc4-fc6 classifier with one fc6 branch per training domain.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{DapError, Result};
use crate::layers::{relu_backward_inplace, relu_inplace, softmax_pair, softmax_rows, Linear};
use crate::real::Real;

/// Column of the positive (target) class in the fc6 output; column 0 is
/// the background class.
pub const POSITIVE: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<T> {
    pub fc4: Linear<T>,
    pub fc5: Linear<T>,
    pub fc6: Vec<Linear<T>>,
    /// ReLU after fc4 and fc5.
    pub relu: bool,
}

/// Softmax-normalized target/background scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorePair {
    pub f_plus: f64,
    pub f_minus: f64,
}

impl ScorePair {
    /// From raw logits laid out as (background, target).
    pub fn from_logits(neg: f64, pos: f64) -> Self {
        let (f_plus, f_minus) = softmax_pair(neg, pos);
        ScorePair { f_plus, f_minus }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn class(self) -> usize {
        match self {
            Label::Positive => POSITIVE,
            Label::Negative => 1 - POSITIVE,
        }
    }
}

/// Activations kept for the backward pass of a batch.
#[derive(Debug, Clone)]
pub struct HeadTrace<T> {
    input: Array2<T>,
    h4: Array2<T>,
    h5: Array2<T>,
    domain: usize,
}

impl<T: Real> HeadTrace<T> {
    /// On/off state of the fc4 and fc5 units.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        crate::backbone::push_signs(&self.h4, &mut out);
        crate::backbone::push_signs(&self.h5, &mut out);
        out
    }
}

impl<T: Real> HeadParams<T> {
    pub fn zeros(inputs: usize, d4: usize, d5: usize, branches: usize) -> Self {
        HeadParams {
            fc4: Linear::zeros(inputs, d4),
            fc5: Linear::zeros(d4, d5),
            fc6: (0..branches).map(|_| Linear::zeros(d5, 2)).collect(),
            relu: true,
        }
    }

    pub fn branches(&self) -> usize {
        self.fc6.len()
    }

    fn branch(&self, domain: usize) -> Result<&Linear<T>> {
        self.fc6.get(domain).ok_or(DapError::UnknownDomain {
            domain,
            branches: self.fc6.len(),
        })
    }

    /// Logits (batch, 2) for a batch of flattened features (batch, inputs).
    pub fn logits(&self, x: ArrayView2<T>, domain: usize) -> Result<Array2<T>> {
        Ok(self.logits_traced(x, domain)?.0)
    }

    pub fn logits_traced(&self, x: ArrayView2<T>, domain: usize) -> Result<(Array2<T>, HeadTrace<T>)> {
        let fc6 = self.branch(domain)?;
        if x.ncols() != self.fc4.inputs() {
            return Err(DapError::SizeMismatch {
                expected: vec![self.fc4.inputs()],
                actual: vec![x.ncols()],
            });
        }
        let mut h4 = self.fc4.forward(x);
        if self.relu {
            relu_inplace(&mut h4);
        }
        let mut h5 = self.fc5.forward(h4.view());
        if self.relu {
            relu_inplace(&mut h5);
        }
        let logits = fc6.forward(h5.view());
        Ok((
            logits,
            HeadTrace {
                input: x.to_owned(),
                h4,
                h5,
                domain,
            },
        ))
    }

    /// Accumulates parameter gradients for `grad_logits` into `grad` and
    /// returns the gradient with respect to the input features.
    pub fn backward(&self, trace: &HeadTrace<T>, grad_logits: ArrayView2<T>, grad: &mut HeadParams<T>) -> Array2<T> {
        let d = trace.domain;
        let mut g5 = self.fc6[d].backward(trace.h5.view(), grad_logits, &mut grad.fc6[d]);
        if self.relu {
            relu_backward_inplace(&mut g5, &trace.h5);
        }
        let mut g4 = self.fc5.backward(trace.h4.view(), g5.view(), &mut grad.fc5);
        if self.relu {
            relu_backward_inplace(&mut g4, &trace.h4);
        }
        self.fc4.backward(trace.input.view(), g4.view(), &mut grad.fc4)
    }

    /// Classifies one flattened feature vector.
    pub fn classify(&self, feature: ArrayView1<T>, domain: usize) -> Result<ScorePair> {
        let x = feature.insert_axis(Axis(0));
        let l = self.logits(x, domain)?;
        Ok(ScorePair::from_logits(l[[0, 0]].as_f64(), l[[0, POSITIVE]].as_f64()))
    }

    /// Positive-class probability of every row.
    pub fn positive_scores(&self, x: ArrayView2<T>, domain: usize) -> Result<Vec<f64>> {
        let p = softmax_rows(self.logits(x, domain)?.view());
        Ok(p.column(POSITIVE).iter().map(|v| v.as_f64()).collect())
    }
}

/// Mean softmax cross-entropy of a (batch, 2) logit matrix.
pub fn loss<T: Real>(logits: ArrayView2<T>, labels: &[Label]) -> f64 {
    assert_eq!(logits.nrows(), labels.len(), "one label per row");
    let total: f64 = logits
        .axis_iter(Axis(0))
        .zip(labels)
        .map(|(row, &label)| {
            let (a, b) = (row[0].as_f64(), row[1].as_f64());
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            lse - row[label.class()].as_f64()
        })
        .sum();
    total / labels.len() as f64
}

/// Gradient of [`loss`] with respect to the logits, already divided by
/// `normalizer` (the batch size of the mean).
pub fn loss_grad<T: Real>(logits: ArrayView2<T>, labels: &[Label], normalizer: usize) -> Array2<T> {
    let mut g = softmax_rows(logits);
    let scale = T::lit(1.0 / normalizer as f64);
    for (mut row, &label) in g.axis_iter_mut(Axis(0)).zip(labels) {
        row[label.class()] -= T::one();
        row.mapv_inplace(|v| v * scale);
    }
    g
}

/// Flattens a feature vector into a one-row batch.
pub fn as_batch<T: Real>(x: Array1<T>) -> Array2<T> {
    x.insert_axis(Axis(0))
}
