//! Soft-margin SVM in representer form.
//!
//! The decision function is `f(x) = Σ_j α_j k(x, x_j)` over the training
//! graphs, with no intercept. Writing `K` for the training Gram matrix, the
//! regularized hinge objective is
//!
//! ```text
//! ‖max(0, 1 - y ⊙ Kα)‖₁ + λ αᵀKα
//! ```
//!
//! with targets `y ∈ {-1, +1}` obtained from the class labels by `0 → -1`,
//! `1 → +1`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Representer coefficients and regularization strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub alpha: Vec<f64>,
    pub lambda: f64,
}

impl SvmParams {
    /// All-zero coefficients for `n` training graphs.
    pub fn zeros(n: usize, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda {lambda} must be non-negative")));
        }
        Ok(Self {
            alpha: vec![0.0; n],
            lambda,
        })
    }
}

/// Hinge targets in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedLabels(Vec<f64>);

impl SignedLabels {
    pub fn from_classes(classes: &[u8]) -> Result<Self> {
        classes
            .iter()
            .map(|&c| match c {
                0 => Ok(-1.0),
                1 => Ok(1.0),
                other => Err(Error::InvalidParameter(format!("class label {other} not in {{0,1}}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `K · α`, one decision value per row of `k`.
pub fn decision_values(k: &Array2<f64>, alpha: &[f64]) -> Result<Vec<f64>> {
    if k.ncols() != alpha.len() {
        return Err(Error::dims("kernel columns", alpha.len(), k.ncols()));
    }
    Ok(k.dot(&Array1::from(alpha.to_vec())).to_vec())
}

/// Class 1 for strictly positive decision values, class 0 otherwise.
pub fn predict(value: f64) -> u8 {
    u8::from(value > 0.0)
}

fn check_objective_args(k: &Array2<f64>, alpha: &[f64], y: &SignedLabels, lambda: f64) -> Result<()> {
    if k.nrows() != k.ncols() {
        return Err(Error::dims("gram matrix columns", k.nrows(), k.ncols()));
    }
    if alpha.len() != k.nrows() {
        return Err(Error::dims("alpha", k.nrows(), alpha.len()));
    }
    if y.len() != k.nrows() {
        return Err(Error::dims("labels", k.nrows(), y.len()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} must be non-negative")));
    }
    Ok(())
}

/// Regularized hinge objective.
pub fn objective(k: &Array2<f64>, alpha: &[f64], y: &SignedLabels, lambda: f64) -> Result<f64> {
    check_objective_args(k, alpha, y, lambda)?;
    let ka = k.dot(&Array1::from(alpha.to_vec()));
    let hinge: f64 = ka.iter().zip(y.as_slice()).map(|(f, y)| (1.0 - y * f).max(0.0)).sum();
    let reg: f64 = alpha.iter().zip(&ka).map(|(a, f)| a * f).sum();
    Ok(hinge + lambda * reg)
}

/// Objective value and its gradients w.r.t. `α` and every entry of `K`.
#[derive(Debug, Clone)]
pub struct ObjectiveGrad {
    pub value: f64,
    /// `K·α`: the decision values on the training set.
    pub decision: Vec<f64>,
    pub d_alpha: Vec<f64>,
    /// `∂objective/∂K[i][j]`, treating each entry as independent.
    pub d_k: Array2<f64>,
}

/// Evaluates the objective together with its (sub)gradient.
///
/// A hinge term exactly at margin 1 is treated as inactive (derivative 0).
pub fn objective_with_grad(k: &Array2<f64>, alpha: &[f64], y: &SignedLabels, lambda: f64) -> Result<ObjectiveGrad> {
    check_objective_args(k, alpha, y, lambda)?;
    let n = alpha.len();
    let a = Array1::from(alpha.to_vec());
    let ka = k.dot(&a);
    // g_i = ∂hinge/∂(Kα)_i
    let mut g = Array1::zeros(n);
    let mut hinge = 0.0;
    for i in 0..n {
        let slack = 1.0 - y.as_slice()[i] * ka[i];
        if slack > 0.0 {
            hinge += slack;
            g[i] = -y.as_slice()[i];
        }
    }
    let reg = a.dot(&ka);
    // Kᵀg + λ(K + Kᵀ)α
    let d_alpha = k.t().dot(&g) + &((&ka + &k.t().dot(&a)) * lambda);
    // g_i α_j + λ α_i α_j
    let mut d_k = Array2::zeros((n, n));
    for i in 0..n {
        let row_scale = g[i] + lambda * a[i];
        if row_scale == 0.0 {
            continue;
        }
        for j in 0..n {
            d_k[[i, j]] = row_scale * a[j];
        }
    }
    Ok(ObjectiveGrad {
        value: hinge + lambda * reg,
        decision: ka.to_vec(),
        d_alpha: d_alpha.to_vec(),
        d_k,
    })
}
