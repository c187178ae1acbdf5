//! Simulated replicated series and the Monte-Carlo experiment runner.
//!
//! Every simulated series has covariates `[1, x_t]`: a deterministic
//! intercept and one continuous regressor. Responses are
//! `Y_tj = mu(x_t) + sigma(x_t) eps_tj` with standard normal `eps_tj`, so the
//! conditional `tau`-quantile is `mu(x) + sigma(x) z_tau`.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{fit_js, fit_kb};
use crate::error::{check_tau, Error, Result};
use crate::evaluation::{evaluate_method, ordered_split, EvalResult, NpPredictor, QuantilePredictor};
use crate::normal::normal_quantile;
use crate::np::{NpConfig, NpEstimate, NpModel};
use crate::rng::{stream, Domain, RNG_ALGORITHM};
use crate::series::{CovariateKind, ReplicatedSeries, TauGrid, TimeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgpKind {
    Sqrm,
    Nlqrm,
    Nlhqrm,
    Gqrm,
}

impl DgpKind {
    pub const ALL: [DgpKind; 4] = [DgpKind::Sqrm, DgpKind::Nlqrm, DgpKind::Nlhqrm, DgpKind::Gqrm];

    pub fn name(self) -> &'static str {
        match self {
            DgpKind::Sqrm => "sqrm",
            DgpKind::Nlqrm => "nlqrm",
            DgpKind::Nlhqrm => "nlhqrm",
            DgpKind::Gqrm => "gqrm",
        }
    }
}

impl std::str::FromStr for DgpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DgpKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown DGP '{s}'")))
    }
}

/// Conditional scale: `sigma(x) = sqrt(c)` or `sqrt(c |x|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "type", content = "c")]
pub enum SigmaSpec {
    Constant(f64),
    Proportional(f64),
}

impl SigmaSpec {
    pub fn sigma(self, x: f64) -> f64 {
        match self {
            SigmaSpec::Constant(c) => c.sqrt(),
            SigmaSpec::Proportional(c) => (c * x.abs()).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub kind: DgpKind,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    /// Polynomial coefficients of `mu`, lowest order first.
    pub mean_params: Vec<f64>,
    pub sigma: SigmaSpec,
    pub ar_coefficient: f64,
}

impl DgpConfig {
    /// Standard parameters for `kind`.
    pub fn new(kind: DgpKind, n: usize, k: usize, seed: u64) -> Self {
        let (mean_params, sigma) = match kind {
            DgpKind::Sqrm => (vec![1.0, 0.4], SigmaSpec::Constant(1.0)),
            DgpKind::Nlqrm => (vec![2.2, 1.7, -0.5], SigmaSpec::Constant(1.0)),
            DgpKind::Nlhqrm | DgpKind::Gqrm => {
                (vec![2.2, 1.7, -0.5], SigmaSpec::Proportional(1.0))
            }
        };
        DgpConfig {
            kind,
            n,
            k,
            seed,
            mean_params,
            sigma,
            ar_coefficient: 0.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Configuration(format!("n = {} (need at least 10)", self.n)));
        }
        if self.k < 2 {
            return Err(Error::Configuration(format!("k = {} (need at least 2)", self.k)));
        }
        if self.mean_params.is_empty() || self.mean_params.iter().any(|b| !b.is_finite()) {
            return Err(Error::Configuration("mean parameters must be finite and nonempty".into()));
        }
        let c = match self.sigma {
            SigmaSpec::Constant(c) | SigmaSpec::Proportional(c) => c,
        };
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Configuration("scale constant must be nonnegative".into()));
        }
        if !(self.ar_coefficient.abs() < 1.0) {
            return Err(Error::Configuration("AR coefficient must lie in (-1, 1)".into()));
        }
        Ok(())
    }

    pub fn mean(&self, x: f64) -> f64 {
        self.mean_params.iter().rev().fold(0.0, |acc, b| acc * x + b)
    }
}

/// Covariate path: iid standard normal, or a stationary AR(1) for GQRM.
pub fn gen_covariates<R: Rng + ?Sized>(config: &DgpConfig, rng: &mut R) -> Vec<f64> {
    let mut draw = || -> f64 { rng.sample(StandardNormal) };
    match config.kind {
        DgpKind::Gqrm => {
            let phi = config.ar_coefficient;
            let mut x = draw() / (1.0 - phi * phi).sqrt();
            let mut out = Vec::with_capacity(config.n);
            out.push(x);
            for _ in 1..config.n {
                x = phi * x + draw();
                out.push(x);
            }
            out
        }
        _ => (0..config.n).map(|_| draw()).collect(),
    }
}

/// `mu(x) + sigma(x) z_tau`.
pub fn true_quantile(config: &DgpConfig, x: f64, tau: f64) -> f64 {
    config.mean(x) + config.sigma.sigma(x) * normal_quantile(tau)
}

/// Replicates for every time point; time `t` of replication `replication`
/// draws from its own stream.
pub fn gen_replicates(config: &DgpConfig, covariates: &[f64], replication: u64) -> ReplicatedSeries {
    let replicates = covariates
        .iter()
        .enumerate()
        .map(|(t, &x)| {
            let mut rng = stream(config.seed, replication, Domain::Replicates, t as u64);
            let (mu, sd) = (config.mean(x), config.sigma.sigma(x));
            (0..config.k)
                .map(|_| mu + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    series_from(covariates, replicates)
}

fn series_from(covariates: &[f64], replicates: Vec<Vec<f64>>) -> ReplicatedSeries {
    ReplicatedSeries::new(
        (1..=covariates.len() as i64).map(TimeId::Index).collect(),
        covariates.iter().map(|&x| vec![1.0, x]).collect(),
        replicates,
        vec![CovariateKind::Deterministic, CovariateKind::Continuous],
        vec!["intercept".into(), "x".into()],
    )
    .expect("simulated series is well formed")
}

/// One full simulated series for replication `replication`.
pub fn simulate(config: &DgpConfig, replication: u64) -> ReplicatedSeries {
    let mut rng = stream(config.seed, replication, Domain::Covariates, 0);
    let x = gen_covariates(config, &mut rng);
    gen_replicates(config, &x, replication)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Kb,
    Js,
    /// Nadaraya-Watson smoother of the sample quantiles.
    Np,
    /// Jackknife bias-corrected smoother.
    NpJackknife,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Kb => "kb",
            Method::Js => "js",
            Method::Np => "np",
            Method::NpJackknife => "np_jk",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kb" => Ok(Method::Kb),
            "js" => Ok(Method::Js),
            "np" => Ok(Method::Np),
            "np_jk" | "np-jk" | "jackknife" => Ok(Method::NpJackknife),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let mut out: Vec<Method> = s.split(',').map(str::parse).collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

/// Fits `method` on `train` and scores it against `targets`.
fn fit_and_evaluate(
    method: Method,
    tau: f64,
    train: &ReplicatedSeries,
    test: &ReplicatedSeries,
    train_targets: &[f64],
    test_targets: &[f64],
    np: &NpConfig,
) -> Result<EvalResult> {
    let model;
    let predictor: Box<dyn QuantilePredictor + '_>;
    match method {
        Method::Kb => predictor = Box::new(fit_kb(train, tau)?),
        Method::Js => predictor = Box::new(fit_js(train, tau)?),
        Method::Np | Method::NpJackknife => {
            model = NpModel::fit(train, tau, np)?;
            let estimate = if method == Method::Np {
                NpEstimate::NadarayaWatson
            } else {
                NpEstimate::Jackknife
            };
            predictor = Box::new(NpPredictor {
                model: &model,
                estimate,
            });
        }
    }
    let result = evaluate_method(
        predictor.as_ref(),
        train.covariates(),
        train_targets,
        test.covariates(),
        test_targets,
    )?;
    if !result.training_rmse.is_finite() {
        return Err(Error::UnsupportedQuery("no training point could be predicted".into()));
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub tau: f64,
    pub n: usize,
    pub k: usize,
    pub metric: String,
    pub value: f64,
    pub replications: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: DgpConfig,
    pub rng: String,
    pub methods: Vec<Method>,
    pub taus: Vec<f64>,
    pub replications: usize,
    pub split: f64,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub const CSV_HEADER: &'static str = "method,tau,n,k,metric,value,replications,failures";

    /// Mean of `metric` for `method` at `tau`.
    pub fn value(&self, method: Method, tau: f64, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method.name() && r.tau == tau && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn failures(&self, method: Method, tau: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.method == method.name() && r.tau == tau)
            .map(|r| r.failures)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.method,
                r.tau,
                r.n,
                r.k,
                r.metric,
                crate::format_f64(r.value),
                r.replications,
                r.failures
            )?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

#[derive(Default, Clone)]
struct Accumulator {
    successes: usize,
    failures: usize,
    training: f64,
    prediction: f64,
    mape: f64,
    mape_count: usize,
    horizon_sum: Vec<f64>,
    horizon_count: Vec<usize>,
}

impl Accumulator {
    fn add(&mut self, result: &Result<EvalResult>) {
        let Ok(r) = result else {
            self.failures += 1;
            return;
        };
        self.successes += 1;
        self.training += r.training_rmse;
        if r.prediction_rmse.is_finite() {
            self.prediction += r.prediction_rmse;
        }
        if let Some(m) = r.prediction_mape {
            self.mape += m;
            self.mape_count += 1;
        }
        if self.horizon_sum.len() < r.per_horizon.len() {
            self.horizon_sum.resize(r.per_horizon.len(), 0.0);
            self.horizon_count.resize(r.per_horizon.len(), 0);
        }
        for (i, &(_, se)) in r.per_horizon.iter().enumerate() {
            if se.is_finite() {
                self.horizon_sum[i] += se;
                self.horizon_count[i] += 1;
            }
        }
    }
}

/// Runs `replications` independent simulations. Replication `r` draws only
/// from streams keyed by `(seed, r)`; results are folded in ascending `r`.
pub fn run_experiment(
    config: &DgpConfig,
    methods: &[Method],
    taus: &TauGrid,
    replications: usize,
    split: f64,
) -> Result<ExperimentReport> {
    run_experiment_with(config, methods, taus, replications, split, &NpConfig::default())
}

pub fn run_experiment_with(
    config: &DgpConfig,
    methods: &[Method],
    taus: &TauGrid,
    replications: usize,
    split: f64,
    np: &NpConfig,
) -> Result<ExperimentReport> {
    config.validate()?;
    if replications == 0 {
        return Err(Error::Configuration("at least one replication is required".into()));
    }
    if methods.is_empty() {
        return Err(Error::Configuration("no methods requested".into()));
    }
    for &t in taus.levels() {
        check_tau(t)?;
    }
    let (train_idx, test_idx) = ordered_split(config.n, split)?;

    let per_rep: Vec<Vec<Result<EvalResult>>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let data = simulate(config, r);
            let train = data.select(&train_idx).expect("valid split");
            let test = data.select(&test_idx).expect("valid split");
            let mut out = Vec::with_capacity(methods.len() * taus.levels().len());
            for &m in methods {
                for &tau in taus.levels() {
                    let target = |s: &ReplicatedSeries| -> Vec<f64> {
                        s.covariates().iter().map(|x| true_quantile(config, x[1], tau)).collect()
                    };
                    out.push(fit_and_evaluate(m, tau, &train, &test, &target(&train), &target(&test), np));
                }
            }
            out
        })
        .collect();

    let cells = methods.len() * taus.levels().len();
    let mut acc = vec![Accumulator::default(); cells];
    for rep in &per_rep {
        for (a, res) in acc.iter_mut().zip(rep) {
            a.add(res);
        }
    }

    let mut rows = Vec::new();
    for (mi, &m) in methods.iter().enumerate() {
        for (ti, &tau) in taus.levels().iter().enumerate() {
            let a = &acc[mi * taus.levels().len() + ti];
            let s = a.successes as f64;
            let mean = |v: f64| if a.successes == 0 { f64::NAN } else { v / s };
            let mut push = |metric: String, value: f64| {
                rows.push(ReportRow {
                    method: m.name().to_string(),
                    tau,
                    n: config.n,
                    k: config.k,
                    metric,
                    value,
                    replications,
                    failures: a.failures,
                })
            };
            push("training_rmse".into(), mean(a.training));
            push("prediction_rmse".into(), mean(a.prediction));
            let mape = if a.mape_count == 0 { f64::NAN } else { a.mape / a.mape_count as f64 };
            push("prediction_mape".into(), mape);
            for (h, (&sum, &count)) in a.horizon_sum.iter().zip(&a.horizon_count).enumerate() {
                let v = if count == 0 { f64::NAN } else { (sum / count as f64).sqrt() };
                push(format!("prediction_rmse_h{}", h + 1), v);
            }
        }
    }
    Ok(ExperimentReport {
        config: config.clone(),
        rng: RNG_ALGORITHM.to_string(),
        methods: methods.to_vec(),
        taus: taus.levels().to_vec(),
        replications,
        split,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantile::sample_quantile;

    #[test]
    fn true_quantile_examples() {
        let sqrm = DgpConfig::new(DgpKind::Sqrm, 100, 10, 0);
        assert_eq!(true_quantile(&sqrm, 0.3, 0.5), 1.0 + 0.4 * 0.3);
        assert!((true_quantile(&sqrm, 0.0, 0.9) - (1.0 + normal_quantile(0.9))).abs() < 1e-15);
        assert!((true_quantile(&sqrm, 0.0, 0.9) - 2.2816).abs() < 1e-4);
        let nlh = DgpConfig::new(DgpKind::Nlhqrm, 100, 10, 0);
        let v = true_quantile(&nlh, -2.0, 0.8);
        assert!((v - (-3.2 + 2f64.sqrt() * normal_quantile(0.8))).abs() < 1e-14);
        assert!((v + 2.0097).abs() < 1e-4);
    }

    #[test]
    fn covariates_are_reproducible() {
        let c = DgpConfig::new(DgpKind::Gqrm, 50, 10, 9);
        let a = gen_covariates(&c, &mut stream(9, 0, Domain::Covariates, 0));
        let b = gen_covariates(&c, &mut stream(9, 0, Domain::Covariates, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn ar1_moments() {
        let c = DgpConfig::new(DgpKind::Gqrm, 100_000, 2, 1);
        let x = gen_covariates(&c, &mut stream(1, 0, Domain::Covariates, 0));
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        let lag1 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / n / var;
        assert!((var - 1.5625).abs() < 0.05, "variance {var}");
        assert!((lag1 - 0.6).abs() < 0.02, "autocorrelation {lag1}");
    }

    #[test]
    fn noiseless_replicates_equal_mean() {
        let mut c = DgpConfig::new(DgpKind::Nlqrm, 10, 2, 3);
        c.sigma = SigmaSpec::Constant(0.0);
        let x: Vec<f64> = (0..10).map(|i| i as f64 / 3.0).collect();
        let s = gen_replicates(&c, &x, 0);
        for (xi, reps) in x.iter().zip(s.replicates()) {
            assert!(reps.iter().all(|&y| y == c.mean(*xi)));
        }
    }

    #[test]
    fn replicate_quantiles_converge() {
        let c = DgpConfig::new(DgpKind::Nlhqrm, 10, 20_000, 5);
        let x = [-1.5, 0.4, 2.0];
        let s = gen_replicates(&c, &x, 0);
        for (xi, reps) in x.iter().zip(s.replicates()) {
            let q = sample_quantile(reps, 0.9).unwrap();
            let sd = c.sigma.sigma(*xi);
            assert!((q - true_quantile(&c, *xi, 0.9)).abs() < 0.05 * sd + 1e-12);
        }
    }

    #[test]
    fn replication_streams_are_independent_of_count() {
        let c = DgpConfig::new(DgpKind::Sqrm, 20, 3, 11);
        let a = simulate(&c, 4);
        let b = simulate(&c, 4);
        assert_eq!(a, b);
        assert_ne!(simulate(&c, 5), a);
    }

    #[test]
    fn noiseless_kb_recovers_line() {
        let mut c = DgpConfig::new(DgpKind::Sqrm, 20, 3, 2);
        c.sigma = SigmaSpec::Constant(0.0);
        let taus = TauGrid::new(vec![0.5]).unwrap();
        let r = run_experiment(&c, &[Method::Kb], &taus, 1, 0.8).unwrap();
        assert!(r.value(Method::Kb, 0.5, "training_rmse").unwrap() < 1e-9);
    }

    #[test]
    fn reports_are_deterministic() {
        let c = DgpConfig::new(DgpKind::Gqrm, 30, 12, 7);
        let taus = TauGrid::new(vec![0.8, 0.9]).unwrap();
        let methods = [Method::Kb, Method::Js, Method::Np];
        let a = run_experiment(&c, &methods, &taus, 4, 0.8).unwrap();
        let b = run_experiment(&c, &methods, &taus, 4, 0.8).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
        assert!(String::from_utf8(x).unwrap().starts_with(ExperimentReport::CSV_HEADER));
        assert!(run_experiment(&c, &methods, &taus, 0, 0.8).is_err());
    }
}
