//! Check loss and sample quantiles.

use crate::error::{check_tau, Error, Result};
use crate::series::{QuantileSeries, ReplicatedSeries};

/// Check (pinball) loss `u * (tau - 1{u < 0})`.
pub fn check_loss(u: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(rho(u, tau))
}

#[inline]
pub(crate) fn rho(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// `ceil(m * tau)` evaluated on the exact product, so that a level such as
/// `0.7` cannot tip an integer product to the next order statistic.
fn ceil_product(m: usize, tau: f64) -> usize {
    let mf = m as f64;
    let p = mf * tau;
    let err = mf.mul_add(tau, -p);
    let c = p.ceil();
    let c = if c == p && err > 0.0 { c + 1.0 } else { c };
    (c as usize).clamp(1, m)
}

/// Index (1-based) of the order statistic returned by [`sample_quantile`].
#[cfg(test)]
fn order_statistic_rank(m: usize, tau: f64) -> usize {
    ceil_product(m, tau)
}

/// Smallest minimizer of `sum_j rho_tau(y_j - m)`, i.e. the order statistic
/// `Y_(ceil(m * tau))`.
pub fn sample_quantile(values: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if values.is_empty() {
        return Err(Error::EmptyData("sample quantile of an empty set".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&sorted, tau))
}

/// Quantile of an already sorted, nonempty slice.
pub(crate) fn sorted_quantile(sorted: &[f64], tau: f64) -> f64 {
    sorted[ceil_product(sorted.len(), tau) - 1]
}

/// Per-time sample quantiles of a replicated series.
pub fn quantile_series(data: &ReplicatedSeries, tau: f64) -> Result<QuantileSeries> {
    check_tau(tau)?;
    let values = data
        .replicates()
        .iter()
        .zip(data.times())
        .map(|(reps, time)| {
            sample_quantile(reps, tau).map_err(|e| match e {
                Error::EmptyData(_) => Error::EmptyData(format!("no replicates at time {time}")),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantileSeries {
        tau,
        values,
        counts: data.counts(),
    })
}
