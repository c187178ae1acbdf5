//! Linear quantile benchmarks.
//!
//! * [`fit_kb`] pools every replicate and minimizes the check loss over a
//!   linear index `X_t' beta`.
//! * [`fit_js`] regresses the per-time sample quantiles on the covariates by
//!   weighted least squares, with weights from estimated sparsities.

mod js;
mod kb;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use js::{estimate_sparsity_weights, fit_js, fit_js_with_weights, SparsityWeights};
pub use kb::{fit_kb, pooled_objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearMethod {
    Kb,
    Js,
}

impl LinearMethod {
    pub fn name(self) -> &'static str {
        match self {
            LinearMethod::Kb => "kb",
            LinearMethod::Js => "js",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQuantileFit {
    pub tau: f64,
    pub beta: Vec<f64>,
    pub method: LinearMethod,
    /// Pooled check loss (KB) or weighted residual sum of squares (JS).
    pub objective: f64,
    /// Per-time `omega_t` (JS only).
    pub omega_diag: Option<Vec<f64>>,
    /// Times whose sparsity estimate hit the density floor (JS only).
    pub floored: Vec<usize>,
}

impl LinearQuantileFit {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        predict_linear(self, x)
    }
}

/// `x' beta`.
pub fn predict_linear(fit: &LinearQuantileFit, x: &[f64]) -> Result<f64> {
    if x.len() != fit.beta.len() {
        return Err(Error::InvalidInput(format!(
            "covariate vector has length {} but the fit has {} coefficients",
            x.len(),
            fit.beta.len()
        )));
    }
    Ok(x.iter().zip(&fit.beta).map(|(a, b)| a * b).sum())
}

/// Fails unless the distinct covariate rows span all `d` columns.
pub(crate) fn check_full_rank(rows: &[Vec<f64>], d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidInput("design has no columns".into()));
    }
    if rows.len() < d {
        return Err(Error::SingularDesign(format!(
            "{} distinct covariate rows cannot determine {d} coefficients",
            rows.len()
        )));
    }
    let m = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let sv = m.singular_values();
    let max = sv.max();
    let tol = max * 1e-12 * rows.len().max(d) as f64;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank < d {
        return Err(Error::SingularDesign(format!(
            "design has rank {rank} but {d} columns"
        )));
    }
    Ok(())
}
