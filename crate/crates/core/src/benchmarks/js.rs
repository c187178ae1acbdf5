//! Weighted least squares on per-time sample quantiles.

use nalgebra::{DMatrix, DVector};

use super::{check_full_rank, LinearMethod, LinearQuantileFit};
use crate::error::{check_tau, Error, Result};
use crate::quantile::{quantile_series, sorted_quantile};
use crate::series::ReplicatedSeries;

/// Minimum replicates per time for a sparsity estimate.
pub const MIN_SPARSITY_REPLICATES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityWeights {
    /// `omega_t = tau (1 - tau) / (|Gamma_t| f_t^2)`.
    pub omega: Vec<f64>,
    /// Indices where the difference quotient hit the density floor.
    pub floored: Vec<usize>,
}

/// Siddiqui difference-quotient density estimate at the `tau` quantile of
/// one replicate set; the flag reports use of the denominator floor.
pub fn sparsity_density(replicates: &[f64], tau: f64) -> (f64, bool) {
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    let h = (0.5 * tau.min(1.0 - tau)).min(k.powf(-1.0 / 3.0));
    let spread = sorted_quantile(&sorted, tau + h) - sorted_quantile(&sorted, tau - h);
    let iqr = sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25);
    let floor = 1e-8 * (iqr + 1e-12);
    if spread < floor {
        (2.0 * h / floor, true)
    } else {
        (2.0 * h / spread, false)
    }
}

pub fn estimate_sparsity_weights(data: &ReplicatedSeries, tau: f64) -> Result<SparsityWeights> {
    check_tau(tau)?;
    let mut omega = Vec::with_capacity(data.len());
    let mut floored = Vec::new();
    for (t, reps) in data.replicates().iter().enumerate() {
        if reps.len() < MIN_SPARSITY_REPLICATES {
            return Err(Error::InsufficientData {
                needed: MIN_SPARSITY_REPLICATES,
                got: reps.len(),
            });
        }
        let (f, flag) = sparsity_density(reps, tau);
        if flag {
            floored.push(t);
        }
        omega.push(tau * (1.0 - tau) / (reps.len() as f64 * f * f));
    }
    Ok(SparsityWeights { omega, floored })
}

/// `beta = (X' W X)^{-1} X' W Q` with `W = diag(1 / omega)`.
pub fn fit_js(data: &ReplicatedSeries, tau: f64) -> Result<LinearQuantileFit> {
    let q = quantile_series(data, tau)?;
    let w = estimate_sparsity_weights(data, tau)?;
    let mut fit = fit_js_with_weights(data.covariates(), &q.values, &w.omega, tau)?;
    fit.floored = w.floored;
    Ok(fit)
}

/// Weighted least squares with caller-supplied `omega`, solved through a QR
/// factorization of `W^{1/2} X`.
pub fn fit_js_with_weights(
    covariates: &[Vec<f64>],
    quantiles: &[f64],
    omega: &[f64],
    tau: f64,
) -> Result<LinearQuantileFit> {
    check_tau(tau)?;
    let n = covariates.len();
    if n == 0 {
        return Err(Error::EmptyData("no time points".into()));
    }
    if quantiles.len() != n || omega.len() != n {
        return Err(Error::InvalidInput("covariates, quantiles and weights differ in length".into()));
    }
    if omega.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidInput("weights must be positive and finite".into()));
    }
    let d = covariates[0].len();
    check_full_rank(covariates, d)?;
    // The solution is invariant to a common rescaling of omega; normalizing
    // by the smallest keeps the scaled rows in a sane range.
    let min = omega.iter().copied().fold(f64::INFINITY, f64::min);
    let root: Vec<f64> = omega.iter().map(|w| (min / w).sqrt()).collect();
    let a = DMatrix::from_fn(n, d, |i, j| root[i] * covariates[i][j]);
    let b = DVector::from_fn(n, |i, _| root[i] * quantiles[i]);
    let qr = a.qr();
    let r = qr.r();
    let diag_max = (0..d).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..d).any(|i| r[(i, i)].abs() <= 1e-12 * diag_max) {
        return Err(Error::SingularDesign("weighted design is rank deficient".into()));
    }
    let qtb = qr.q().transpose() * &b;
    let beta = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))?;
    let beta: Vec<f64> = beta.iter().copied().collect();
    let objective = covariates
        .iter()
        .zip(quantiles)
        .zip(omega)
        .map(|((x, q), w)| {
            let r = q - x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
            r * r / w
        })
        .sum();
    Ok(LinearQuantileFit {
        tau,
        beta,
        method: LinearMethod::Js,
        objective,
        omega_diag: Some(omega.to_vec()),
        floored: vec![],
    })
}
