//! Conditional quantile estimation for time series with replicated
//! observations.
//!
//! Each time point `t` carries one covariate vector `X_t` and a set of
//! replicated responses `{Y_tj}`. The per-time sample quantiles `Q_t` are
//! smoothed over the covariates with a Nadaraya-Watson estimator, bias
//! corrected by a jackknife combination of two bandwidths, and equipped with
//! pointwise confidence intervals. Two linear benchmarks (pooled check-loss
//! regression and sparsity-weighted least squares on `Q_t`), a Monte-Carlo
//! harness and real-data preprocessing complete the toolkit.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod kernels;
pub mod normal;
pub mod np;
pub mod quadrature;
pub mod quantile;
pub mod rng;
pub mod series;
pub mod simulation;

pub use benchmarks::{fit_js, fit_kb, predict_linear, LinearQuantileFit, LinearMethod};
pub use error::{Error, Result};
pub use kernels::{kernel_constants, KernelFamily, KernelSpec};
pub use np::{CiResult, NpConfig, NpModel};
pub use quantile::{check_loss, quantile_series, sample_quantile};
pub use series::{CovariateKind, QuantileSeries, ReplicatedSeries, TauGrid, TimeId, Transform};

/// Formats a float with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "NA".to_string()
    }
}
