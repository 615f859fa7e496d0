//! Single-hidden-layer extreme learning machine.
//!
//! Input weights and biases are random and frozen; only the output weights
//! are fit, in one shot, as `β = H⁺T` with `H = g(X Wᵀ + b)`.

use alloc::format;
use alloc::vec::Vec;

use crate::linalg::{matmul, pinv_default, sigmoid, Matrix};
use crate::rng::substream;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => libm::tanh(x),
            Activation::Relu => x.max(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElmModel {
    /// (L, D) input weights.
    pub w: Matrix,
    /// Length L.
    pub b: Vec<f64>,
    /// (L, M) output weights.
    pub beta: Matrix,
    pub activation: Activation,
}

impl ElmModel {
    /// Hidden-layer output `g(X Wᵀ + b)`, shape (N, L).
    pub fn hidden(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.w.cols() {
            return Err(Error::Shape {
                op: "elm hidden",
                left: x.shape(),
                right: self.w.shape(),
            });
        }
        let mut h = matmul(x, &self.w.transpose())?;
        for r in 0..h.rows() {
            for (v, b) in h.row_mut(r).iter_mut().zip(&self.b) {
                *v = self.activation.apply(*v + b);
            }
        }
        Ok(h)
    }

    /// Network output `g(X Wᵀ + b) β`, shape (N, M).
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        matmul(&self.hidden(x)?, &self.beta)
    }
}

/// Fit an ELM with `l` hidden nodes. `w` and `b` are uniform on [-1, 1)
/// from the "elm" substream.
pub fn elm_fit(
    x: &Matrix,
    t: &Matrix,
    l: usize,
    seed: u64,
    activation: Activation,
) -> Result<ElmModel> {
    if l == 0 {
        return Err(Error::InvalidArgument(
            "elm needs at least one hidden node".into(),
        ));
    }
    if x.rows() != t.rows() {
        return Err(Error::Shape {
            op: "elm_fit",
            left: x.shape(),
            right: t.shape(),
        });
    }
    let mut rng = substream(seed, "elm");
    let w = Matrix::from_fn(l, x.cols(), |_, _| rng.uniform(-1.0, 1.0));
    let b = (0..l).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let mut model = ElmModel {
        w,
        b,
        beta: Matrix::zeros(l, t.cols()),
        activation,
    };
    let h = model.hidden(x)?;
    model.beta = matmul(&pinv_default(&h)?, t)?;
    if !model.beta.is_finite() {
        return Err(Error::NonFinite(format!("elm beta ({l} nodes)")));
    }
    Ok(model)
}
