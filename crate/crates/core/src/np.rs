//! Kernel smoothing of per-time sample quantiles.
//!
//! The model stores the training covariates (standardized per smooth
//! dimension), the sample quantiles `Q_t`, a bandwidth `b_n` and the kernel.
//! It provides
//!
//! - the kernel density `g(x) = (n b^{d_c})^{-1} sum_t K((x - X_t) / b)`,
//! - the Nadaraya-Watson estimate `mu(x; b) = sum_t K_t Q_t / sum_t K_t`,
//! - the jackknife combination `(lambda mu(x; b) - mu(x; sqrt(lambda) b)) / (lambda - 1)`,
//! - the residual variance `sigma^2(x)` and pointwise confidence intervals,
//! - grid surfaces of the jackknife estimate over two covariates.
//!
//! Covariate dimensions play one of three roles. Continuous columns (and
//! non-constant deterministic columns such as a trend) are standardized and
//! smoothed with the kernel. Binary columns contribute an exact-match factor.
//! Constant deterministic columns (an intercept) are ignored. `d_c` counts
//! the smoothed dimensions.
//!
//! Queries whose kernel window holds fewer than `min_active` training points
//! are retried with the bandwidth grown by `growth`, up to `max_retries`
//! times, before failing with [`Error::UnsupportedQuery`].
//!
//! All kernel sums run in ascending `t` so results are reproducible bit for bit.

use std::io::Write;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{check_tau, Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::normal::two_sided_critical;
use crate::quantile::quantile_series;
use crate::series::{CovariateKind, QuantileSeries, ReplicatedSeries};

/// Bandwidth growth applied when a query has too few active training points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallbackPolicy {
    pub growth: f64,
    pub max_retries: u32,
    pub min_active: usize,
}

impl Default for FallbackPolicy {
    fn default() -> Self {
        FallbackPolicy {
            growth: 1.5,
            max_retries: 8,
            min_active: 3,
        }
    }
}

/// Kernel used inside the residual variance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKernel {
    #[default]
    Base,
    Jackknife,
}

/// Which mean estimate a prediction reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NpEstimate {
    #[default]
    NadarayaWatson,
    Jackknife,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpConfig {
    /// Fixed bandwidth; `n^{-1/5}` when absent.
    pub bandwidth: Option<f64>,
    /// Kernel family; chosen from the smooth dimension when absent.
    pub family: Option<KernelFamily>,
    pub lambda: f64,
    pub fallback: FallbackPolicy,
    pub standardize: bool,
    pub variance_kernel: VarianceKernel,
    /// Residuals `Q_t - mu*(X_t)` computed without observation `t`.
    pub leave_one_out: bool,
}

impl Default for NpConfig {
    fn default() -> Self {
        NpConfig {
            bandwidth: None,
            family: None,
            lambda: 2.0,
            fallback: FallbackPolicy::default(),
            standardize: true,
            variance_kernel: VarianceKernel::Base,
            leave_one_out: false,
        }
    }
}

/// `n^{-1/5}`.
pub fn default_bandwidth(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    Ok((n as f64).powf(-0.2))
}

/// Per-dimension affine map `z = (x - center) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    pub fn identity(d: usize) -> Self {
        Standardization {
            centers: vec![0.0; d],
            scales: vec![1.0; d],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.centers.iter().zip(&self.scales))
            .map(|(v, (c, s))| (v - c) / s)
            .collect()
    }
}

fn standardize_masked(
    covariates: &[Vec<f64>],
    mask: &[bool],
    names: Option<&[String]>,
) -> Result<(Vec<Vec<f64>>, Standardization)> {
    let d = mask.len();
    let n = covariates.len() as f64;
    let mut params = Standardization::identity(d);
    for (j, &on) in mask.iter().enumerate() {
        if !on {
            continue;
        }
        let mean = covariates.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = covariates.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::DegenerateCovariate {
                dimension: j,
                name: names
                    .and_then(|n| n.get(j).cloned())
                    .unwrap_or_else(|| format!("x{}", j + 1)),
            });
        }
        params.centers[j] = mean;
        params.scales[j] = sd;
    }
    let out = covariates.iter().map(|r| params.apply(r)).collect();
    Ok((out, params))
}

/// Centers and scales every continuous column by its training mean and
/// n-denominator standard deviation; other columns pass through.
pub fn standardize(
    covariates: &[Vec<f64>],
    kinds: &[CovariateKind],
) -> Result<(Vec<Vec<f64>>, Standardization)> {
    if covariates.is_empty() {
        return Err(Error::EmptyData("no covariate rows".into()));
    }
    let mask: Vec<bool> = kinds.iter().map(|k| *k == CovariateKind::Continuous).collect();
    standardize_masked(covariates, &mask, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimRole {
    Smooth,
    Match,
    Ignore,
}

fn assign_roles(covariates: &[Vec<f64>], kinds: &[CovariateKind]) -> Vec<DimRole> {
    kinds
        .iter()
        .enumerate()
        .map(|(j, kind)| match kind {
            CovariateKind::Continuous => DimRole::Smooth,
            CovariateKind::Binary => DimRole::Match,
            CovariateKind::Deterministic => {
                let first = covariates[0][j];
                if covariates.iter().all(|r| r[j] == first) {
                    DimRole::Ignore
                } else {
                    DimRole::Smooth
                }
            }
        })
        .collect()
}

/// `b^2 psi_K (mu''(x) + 2 mu'(x) g'(x) / g(x))`, the leading bias term of
/// the Nadaraya-Watson estimate as stated by its central limit theorem.
pub fn theorem_bias(bandwidth: f64, psi: f64, mu1: f64, mu2: f64, g: f64, g1: f64) -> f64 {
    bandwidth * bandwidth * psi * (mu2 + 2.0 * mu1 * g1 / g)
}

/// Point estimate with its interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub sigma_hat: f64,
    pub g_hat: f64,
    /// Bandwidth after the fallback policy.
    pub bandwidth: f64,
}

impl CiResult {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Kernel weights at one query after the fallback policy.
struct Window {
    z: Vec<f64>,
    bandwidth: f64,
    weights: Vec<f64>,
}

impl Window {
    fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Fitted nonparametric quantile model.
#[derive(Debug, Clone)]
pub struct NpModel {
    tau: f64,
    kernel: Option<KernelSpec>,
    lambda: f64,
    bandwidth: f64,
    roles: Vec<DimRole>,
    smooth: Vec<usize>,
    matched: Vec<usize>,
    names: Vec<String>,
    train: Vec<Vec<f64>>,
    raw_train: Vec<Vec<f64>>,
    quantiles: QuantileSeries,
    standardization: Standardization,
    config: NpConfig,
    fitted: Vec<OnceLock<Option<f64>>>,
}

impl NpModel {
    /// Computes the sample quantiles at `tau` and fits on them.
    pub fn fit(data: &ReplicatedSeries, tau: f64, config: &NpConfig) -> Result<Self> {
        let q = quantile_series(data, tau)?;
        Self::from_quantiles(data.covariates(), data.kinds(), data.names(), q, config)
    }

    /// Fits on precomputed per-time quantiles.
    pub fn from_quantiles(
        covariates: &[Vec<f64>],
        kinds: &[CovariateKind],
        names: &[String],
        quantiles: QuantileSeries,
        config: &NpConfig,
    ) -> Result<Self> {
        check_tau(quantiles.tau)?;
        let n = covariates.len();
        if n < 2 {
            return Err(Error::InsufficientData { needed: 2, got: n });
        }
        if quantiles.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} quantiles for {n} covariate rows",
                quantiles.len()
            )));
        }
        let d = kinds.len();
        if covariates.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("covariate rows do not match the kinds".into()));
        }
        let f = &config.fallback;
        if !(f.growth > 1.0) || f.min_active == 0 {
            return Err(Error::Configuration(
                "fallback growth must exceed 1 and min_active must be positive".into(),
            ));
        }
        let names: Vec<String> = if names.len() == d {
            names.to_vec()
        } else {
            (1..=d).map(|i| format!("x{i}")).collect()
        };
        let roles = assign_roles(covariates, kinds);
        let smooth: Vec<usize> = (0..d).filter(|&j| roles[j] == DimRole::Smooth).collect();
        let matched: Vec<usize> = (0..d).filter(|&j| roles[j] == DimRole::Match).collect();
        let kernel = if smooth.is_empty() {
            None
        } else {
            let family = config
                .family
                .unwrap_or_else(|| KernelFamily::default_for(smooth.len()));
            Some(KernelSpec::with_lambda(family, smooth.len(), config.lambda)?)
        };
        if !(config.lambda > 1.0) {
            return Err(Error::InvalidParameter("jackknife factor must exceed 1".into()));
        }
        let (train, standardization) = if config.standardize {
            let mask: Vec<bool> = roles.iter().map(|r| *r == DimRole::Smooth).collect();
            standardize_masked(covariates, &mask, Some(&names))?
        } else {
            (covariates.to_vec(), Standardization::identity(d))
        };
        let bandwidth = match config.bandwidth {
            Some(b) if b.is_finite() && b > 0.0 => b,
            Some(b) => {
                return Err(Error::InvalidParameter(format!(
                    "bandwidth must be positive, got {b}"
                )))
            }
            None => default_bandwidth(n)?,
        };
        Ok(NpModel {
            tau: quantiles.tau,
            kernel,
            lambda: config.lambda,
            bandwidth,
            roles,
            smooth,
            matched,
            names,
            train,
            raw_train: covariates.to_vec(),
            quantiles,
            standardization,
            config: config.clone(),
            fitted: (0..n).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self) -> Option<&KernelSpec> {
        self.kernel.as_ref()
    }

    pub fn roles(&self) -> &[DimRole] {
        &self.roles
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn quantiles(&self) -> &QuantileSeries {
        &self.quantiles
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    /// Number of kernel-smoothed dimensions `d_c`.
    pub fn smooth_dimension(&self) -> usize {
        self.smooth.len()
    }

    /// `phi` of the jackknife kernel (1 when no dimension is smoothed).
    pub fn phi_jackknife(&self) -> f64 {
        self.kernel.as_ref().map_or(1.0, KernelSpec::phi_jackknife)
    }

    fn to_internal(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.roles.len() {
            return Err(Error::InvalidInput(format!(
                "query has dimension {} (model has {})",
                x.len(),
                self.roles.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite query".into()));
        }
        Ok(self.standardization.apply(x))
    }

    /// Kernel weight of training row `row` at internal query `z`.
    #[inline]
    fn weight(&self, z: &[f64], row: &[f64], b: f64, jackknife: bool, buf: &mut [f64]) -> f64 {
        for &j in &self.matched {
            if z[j] != row[j] {
                return 0.0;
            }
        }
        match &self.kernel {
            None => 1.0,
            Some(k) => {
                for (slot, &j) in buf.iter_mut().zip(&self.smooth) {
                    *slot = (z[j] - row[j]) / b;
                }
                if jackknife {
                    k.eval_jackknife(buf)
                } else {
                    k.eval(buf)
                }
            }
        }
    }

    fn weights(&self, z: &[f64], b: f64, exclude: Option<usize>) -> Vec<f64> {
        let mut buf = vec![0.0; self.smooth.len()];
        self.train
            .iter()
            .enumerate()
            .map(|(t, row)| {
                if Some(t) == exclude {
                    0.0
                } else {
                    self.weight(z, row, b, false, &mut buf)
                }
            })
            .collect()
    }

    fn window(&self, z: Vec<f64>, start: f64, exclude: Option<usize>) -> Result<Window> {
        let policy = self.config.fallback;
        let mut b = start;
        for _ in 0..=policy.max_retries {
            let weights = self.weights(&z, b, exclude);
            let active = weights.iter().filter(|&&w| w > 0.0).count();
            if active >= policy.min_active {
                return Ok(Window {
                    z,
                    bandwidth: b,
                    weights,
                });
            }
            b *= policy.growth;
        }
        Err(Error::UnsupportedQuery(format!(
            "fewer than {} training points within the kernel window after {} bandwidth expansions",
            policy.min_active, policy.max_retries
        )))
    }

    fn weighted_mean(&self, weights: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (w, q) in weights.iter().zip(&self.quantiles.values) {
            num += w * q;
            den += w;
        }
        num / den
    }

    fn scaled_count(&self, b: f64) -> f64 {
        self.train.len() as f64 * b.powi(self.smooth.len() as i32)
    }

    /// Kernel density estimate at `x` with the model bandwidth.
    pub fn density_estimate(&self, x: &[f64]) -> Result<f64> {
        let z = self.to_internal(x)?;
        let total: f64 = self.weights(&z, self.bandwidth, None).iter().sum();
        Ok(total / self.scaled_count(self.bandwidth))
    }

    /// Nadaraya-Watson estimate at `x`, starting from `bandwidth`.
    pub fn nw_estimate(&self, x: &[f64], bandwidth: f64) -> Result<f64> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        let w = self.window(self.to_internal(x)?, bandwidth, None)?;
        Ok(self.weighted_mean(&w.weights))
    }

    fn jackknife_in(&self, w: &Window, exclude: Option<usize>) -> f64 {
        let lam = self.lambda;
        let narrow = self.weighted_mean(&w.weights);
        let wide_weights = self.weights(&w.z, lam.sqrt() * w.bandwidth, exclude);
        let wide = self.weighted_mean(&wide_weights);
        (lam * narrow - wide) / (lam - 1.0)
    }

    /// Jackknife bias-corrected estimate `mu*(x)`.
    pub fn jackknife_estimate(&self, x: &[f64]) -> Result<f64> {
        let w = self.window(self.to_internal(x)?, self.bandwidth, None)?;
        Ok(self.jackknife_in(&w, None))
    }

    /// Mean estimate of the requested kind.
    pub fn predict(&self, x: &[f64], estimate: NpEstimate) -> Result<f64> {
        match estimate {
            NpEstimate::NadarayaWatson => self.nw_estimate(x, self.bandwidth),
            NpEstimate::Jackknife => self.jackknife_estimate(x),
        }
    }

    /// `mu*(X_t)` at training row `t`, cached.
    fn fitted_at(&self, t: usize) -> Option<f64> {
        *self.fitted[t].get_or_init(|| {
            let exclude = self.config.leave_one_out.then_some(t);
            self.window(self.train[t].clone(), self.bandwidth, exclude)
                .ok()
                .map(|w| self.jackknife_in(&w, exclude))
        })
    }

    /// Bias-corrected fitted values at every training row.
    pub fn fitted_jackknife(&self) -> Vec<Option<f64>> {
        (0..self.train.len()).map(|t| self.fitted_at(t)).collect()
    }

    fn variance_in(&self, w: &Window) -> Result<f64> {
        let total = w.total();
        let jackknife = self.config.variance_kernel == VarianceKernel::Jackknife;
        let mut buf = vec![0.0; self.smooth.len()];
        let mut acc = 0.0;
        for (t, row) in self.train.iter().enumerate() {
            let k2 = if jackknife {
                self.weight(&w.z, row, w.bandwidth, true, &mut buf)
            } else {
                w.weights[t]
            };
            if k2 == 0.0 {
                continue;
            }
            let fitted = self.fitted_at(t).ok_or_else(|| {
                Error::UnsupportedQuery(format!(
                    "bias-corrected fit undefined at training row {t}"
                ))
            })?;
            let r = self.quantiles.values[t] - fitted;
            acc += k2 * r * r;
        }
        Ok((acc / total).max(0.0))
    }

    /// Residual variance estimate `sigma^2(x)`.
    pub fn variance_estimate(&self, x: &[f64]) -> Result<f64> {
        let w = self.window(self.to_internal(x)?, self.bandwidth, None)?;
        self.variance_in(&w)
    }

    /// `100 (1 - alpha)%` interval around the jackknife estimate.
    pub fn confidence_interval(&self, x: &[f64], alpha: f64) -> Result<CiResult> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        let w = self.window(self.to_internal(x)?, self.bandwidth, None)?;
        let total = w.total();
        let g_hat = total / self.scaled_count(w.bandwidth);
        if !(g_hat > 0.0) {
            return Err(Error::UnsupportedQuery("zero density at the query".into()));
        }
        let point = self.jackknife_in(&w, None);
        let sigma_hat = self.variance_in(&w)?.sqrt();
        let half = two_sided_critical(alpha) * sigma_hat * self.phi_jackknife().sqrt() / total.sqrt();
        Ok(CiResult {
            point,
            lower: point - half,
            upper: point + half,
            level: 1.0 - alpha,
            sigma_hat,
            g_hat,
            bandwidth: w.bandwidth,
        })
    }

    /// Jackknife estimates on a rectangular grid over two smooth covariates,
    /// other covariates held at `fixed`.
    pub fn grid_surface(
        &self,
        axis_i: usize,
        axis_j: usize,
        grid: &GridSpec,
        fixed: &[f64],
    ) -> Result<GridSurface> {
        let d = self.roles.len();
        if axis_i >= d || axis_j >= d || axis_i == axis_j {
            return Err(Error::Configuration(format!(
                "invalid grid axes ({axis_i}, {axis_j}) for dimension {d}"
            )));
        }
        for &a in &[axis_i, axis_j] {
            if self.roles[a] != DimRole::Smooth {
                return Err(Error::Configuration(format!(
                    "grid axis '{}' is not a smoothed covariate",
                    self.names[a]
                )));
            }
        }
        if fixed.len() != d {
            return Err(Error::Configuration(format!(
                "fixed covariate vector has length {} (expected {d})",
                fixed.len()
            )));
        }
        if grid.resolution_i == 0 || grid.resolution_j == 0 {
            return Err(Error::Configuration("grid resolution must be positive".into()));
        }
        for (&a, range) in [axis_i, axis_j].iter().zip([grid.range_i, grid.range_j]) {
            let (lo, hi) = self.hull(a);
            let pad = self.bandwidth * self.standardization.scales[a];
            let tol = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
            if range.0 > range.1 || range.0 < lo - pad - tol || range.1 > hi + pad + tol {
                return Err(Error::Configuration(format!(
                    "range [{}, {}] for '{}' leaves the training hull [{lo}, {hi}] expanded by one bandwidth",
                    range.0, range.1, self.names[a]
                )));
            }
        }
        let mut cells = Vec::with_capacity(grid.resolution_i * grid.resolution_j);
        let mut x = fixed.to_vec();
        for xi in linspace(grid.range_i, grid.resolution_i) {
            for xj in linspace(grid.range_j, grid.resolution_j) {
                x[axis_i] = xi;
                x[axis_j] = xj;
                let value = match self.jackknife_estimate(&x) {
                    Ok(v) => Some(v),
                    Err(Error::UnsupportedQuery(_)) => None,
                    Err(e) => return Err(e),
                };
                cells.push(GridCell { xi, xj, value });
            }
        }
        Ok(GridSurface {
            tau: self.tau,
            axis_i: self.names[axis_i].clone(),
            axis_j: self.names[axis_j].clone(),
            cells,
        })
    }

    /// Range of raw training values along dimension `j`.
    pub fn hull(&self, j: usize) -> (f64, f64) {
        self.raw_train.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r[j]), hi.max(r[j]))
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

fn linspace((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution_i: usize,
    pub resolution_j: usize,
    pub range_i: (f64, f64),
    pub range_j: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub xi: f64,
    pub xj: f64,
    pub value: Option<f64>,
}

/// Row-major table of jackknife estimates (`x_i` outer, `x_j` inner).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSurface {
    pub tau: f64,
    pub axis_i: String,
    pub axis_j: String,
    pub cells: Vec<GridCell>,
}

impl GridSurface {
    /// CSV with header `x_i,x_j,mu_hat`; missing cells are written as `NA`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x_i,x_j,mu_hat")?;
        for c in &self.cells {
            let v = c.value.map_or_else(|| "NA".to_string(), crate::format_f64);
            writeln!(
                out,
                "{},{},{}",
                crate::format_f64(c.xi),
                crate::format_f64(c.xj),
                v
            )?;
        }
        Ok(())
    }
}
