//! Command-line front end.
//!
//! Every flag can also come from a JSON object passed with `--config`; keys
//! are the long flag names with `-` replaced by `_`. Flags given on the
//! command line win over the file.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

use crate::benchmarks::{fit_js, fit_kb};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_method, ordered_split, rolling_windows, NpPredictor, QuantilePredictor, WindowParams,
    WindowUnit,
};
use crate::ingest::{load, CovariateColumn, DesignFlags, IngestSpec};
use crate::np::{GridSpec, NpConfig, NpEstimate, NpModel};
use crate::quantile::quantile_series;
use crate::series::{CovariateKind, ReplicatedSeries, TauGrid, TimeId, Transform};
use crate::simulation::{parse_methods, run_experiment, DgpConfig, DgpKind, Method};

#[derive(Debug, Parser)]
#[command(
    name = "repquant",
    version,
    about = "Conditional quantile estimation for time series with replicated observations"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
struct GlobalArgs {
    /// Seed for every random stream
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON file supplying defaults for any flag
    #[arg(long, global = true)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Comma-separated quantile levels
    #[arg(long, global = true)]
    taus: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte-Carlo experiment on a simulated design
    Simulate(SimulateArgs),
    /// Fit on the leading part of a dataset and predict the rest
    FitPredict(FitPredictArgs),
    /// Rolling-window forecast evaluation
    Windows(WindowsArgs),
    /// Surface of the bias-corrected estimate over two covariates
    Grid(GridArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
struct SimulateArgs {
    /// sqrm, nlqrm, nlhqrm or gqrm
    #[arg(long)]
    dgp: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated subset of kb,js,np,np_jk
    #[arg(long)]
    methods: Option<String>,
    /// Training fraction
    #[arg(long)]
    split: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
struct DataArgs {
    /// Long-format CSV, one row per replicate
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    time_column: Option<String>,
    #[arg(long)]
    response_column: Option<String>,
    /// External covariate as NAME or NAME:KIND (continuous, binary, deterministic)
    #[arg(long = "covariate")]
    covariate: Vec<String>,
    #[arg(long)]
    min_replicates: Option<usize>,
    /// none, sqrt or log1p
    #[arg(long)]
    transform: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    intercept: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    trend: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    monthly: Option<bool>,
    /// Drop rows with a negative response
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    drop_negative: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
struct FitPredictArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// Comma-separated subset of kb,js,np,np_jk
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    split: Option<f64>,
    /// Add confidence intervals to the np rows (centred on the
    /// bias-corrected estimate)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    ci: Option<bool>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
struct WindowsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    methods: Option<String>,
    /// First forecast period start (integer or YYYY-MM / YYYY-MM-DD)
    #[arg(long)]
    anchor: Option<String>,
    #[arg(long)]
    length: Option<u32>,
    #[arg(long)]
    step: Option<u32>,
    /// index, month or day
    #[arg(long)]
    unit: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
struct GridArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    axis_i: Option<String>,
    #[arg(long)]
    axis_j: Option<String>,
    #[arg(long)]
    resolution_i: Option<usize>,
    #[arg(long)]
    resolution_j: Option<usize>,
    /// LO,HI in covariate units (default: training range)
    #[arg(long)]
    range_i: Option<String>,
    #[arg(long)]
    range_j: Option<String>,
    /// Values of the other covariates as NAME=VALUE
    #[arg(long = "fixed")]
    fixed: Vec<String>,
}

/// Overlays non-empty command-line values on the config file.
fn merge<T: Serialize + DeserializeOwned>(file: &Value, cli: &T) -> Result<T> {
    let mut base = file.clone();
    let Value::Object(map) = &mut base else {
        return Err(Error::Configuration("config file must hold a JSON object".into()));
    };
    if let Value::Object(flags) = serde_json::to_value(cli)? {
        for (k, v) in flags {
            let empty = v.is_null() || v.as_array().is_some_and(Vec::is_empty);
            if !empty {
                map.insert(k, v);
            }
        }
    }
    Ok(serde_json::from_value(base)?)
}

struct Context {
    seed: u64,
    out: PathBuf,
    taus: TauGrid,
}

impl Context {
    fn create(&self, name: &str) -> Result<BufWriter<fs::File>> {
        fs::create_dir_all(&self.out)?;
        Ok(BufWriter::new(fs::File::create(self.out.join(name))?))
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let file = match &cli.global.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                Error::Configuration(format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Configuration(format!("config {}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    let global: GlobalArgs = merge(&file, &cli.global)?;
    let ctx = Context {
        seed: global.seed.unwrap_or(0),
        out: global.out.unwrap_or_else(|| PathBuf::from(".")),
        taus: match &global.taus {
            Some(s) => s.parse()?,
            None => TauGrid::default(),
        },
    };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, merge(&file, &a)?),
        Command::FitPredict(a) => cmd_fit_predict(&ctx, merge(&file, &a)?),
        Command::Windows(a) => cmd_windows(&ctx, merge(&file, &a)?),
        Command::Grid(a) => cmd_grid(&ctx, merge(&file, &a)?),
    }
}

fn cmd_simulate(ctx: &Context, a: SimulateArgs) -> Result<()> {
    let kind: DgpKind = a.dgp.as_deref().unwrap_or("sqrm").parse()?;
    let config = DgpConfig::new(kind, a.n.unwrap_or(100), a.k.unwrap_or(500), ctx.seed);
    let methods = parse_methods(a.methods.as_deref().unwrap_or("kb,js,np"))?;
    let report = run_experiment(
        &config,
        &methods,
        &ctx.taus,
        a.reps.unwrap_or(100),
        a.split.unwrap_or(0.8),
    )?;
    let mut csv = ctx.create("report.csv")?;
    report.write_csv(&mut csv)?;
    csv.flush()?;
    let mut json = ctx.create("report.json")?;
    report.write_json(&mut json)?;
    json.flush()?;
    Ok(())
}

fn parse_covariate(s: &str) -> Result<CovariateColumn> {
    let (name, kind) = match s.split_once(':') {
        Some((n, k)) => (n, k.parse::<CovariateKind>()?),
        None => (s, CovariateKind::Continuous),
    };
    if name.is_empty() {
        return Err(Error::Configuration(format!("bad covariate '{s}'")));
    }
    Ok(CovariateColumn {
        name: name.to_string(),
        kind,
    })
}

fn ingest_spec(d: &DataArgs) -> Result<IngestSpec> {
    let path = d
        .input
        .clone()
        .ok_or_else(|| Error::Configuration("--input is required".into()))?;
    if !path.is_file() {
        return Err(Error::Configuration(format!("input file {} not found", path.display())));
    }
    let defaults = IngestSpec::default();
    Ok(IngestSpec {
        path,
        time_column: d.time_column.clone().unwrap_or(defaults.time_column),
        response_column: d.response_column.clone().unwrap_or(defaults.response_column),
        covariates: d.covariate.iter().map(|c| parse_covariate(c)).collect::<Result<_>>()?,
        min_replicates: d.min_replicates.unwrap_or(defaults.min_replicates),
        transform: match &d.transform {
            Some(t) => t.parse::<Transform>()?,
            None => Transform::None,
        },
        design: DesignFlags {
            intercept: d.intercept.unwrap_or(false),
            linear_trend: d.trend.unwrap_or(false),
            monthly_dummies: d.monthly.unwrap_or(false),
        },
        drop_negative: d.drop_negative.unwrap_or(false),
    })
}

fn load_data(d: &DataArgs, trend_denominator: Option<usize>) -> Result<ReplicatedSeries> {
    let spec = ingest_spec(d)?;
    let (data, summary) = load(&spec, trend_denominator)?;
    if summary.dropped > 0 {
        eprintln!(
            "note: dropped {} of {} time points with fewer than {} replicates",
            summary.dropped, summary.groups_read, spec.min_replicates
        );
    }
    if data.dim() == 0 {
        return Err(Error::Configuration(
            "no covariates: add --intercept, --trend, --monthly or --covariate".into(),
        ));
    }
    Ok(data)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), crate::format_f64)
}

/// A fitted method ready to predict.
enum Fitted {
    Linear(crate::benchmarks::LinearQuantileFit),
    Np(Box<NpModel>, NpEstimate),
}

impl Fitted {
    fn fit(method: Method, train: &ReplicatedSeries, tau: f64) -> Result<Fitted> {
        Ok(match method {
            Method::Kb => Fitted::Linear(fit_kb(train, tau)?),
            Method::Js => Fitted::Linear(fit_js(train, tau)?),
            Method::Np => Fitted::Np(Box::new(NpModel::fit(train, tau, &NpConfig::default())?), NpEstimate::NadarayaWatson),
            Method::NpJackknife => {
                Fitted::Np(Box::new(NpModel::fit(train, tau, &NpConfig::default())?), NpEstimate::Jackknife)
            }
        })
    }

    fn predictor(&self) -> Box<dyn QuantilePredictor + '_> {
        match self {
            Fitted::Linear(f) => Box::new(f.clone()),
            Fitted::Np(m, e) => Box::new(NpPredictor {
                model: m,
                estimate: *e,
            }),
        }
    }
}

fn split_data(data: &ReplicatedSeries, fraction: f64) -> Result<(ReplicatedSeries, ReplicatedSeries)> {
    let (tr, te) = ordered_split(data.len(), fraction)?;
    Ok((data.select(&tr)?, data.select(&te)?))
}

fn cmd_fit_predict(ctx: &Context, a: FitPredictArgs) -> Result<()> {
    let methods = parse_methods(a.methods.as_deref().unwrap_or("kb,js,np"))?;
    let fraction = a.split.unwrap_or(0.8);
    // the trend is scaled by the training length
    let probe = load_data(&a.data, None)?;
    let (train_idx, _) = ordered_split(probe.len(), fraction)?;
    let data = if a.data.trend.unwrap_or(false) {
        load_data(&a.data, Some(train_idx.len()))?
    } else {
        probe
    };
    let (train, test) = split_data(&data, fraction)?;
    let with_ci = a.ci.unwrap_or(false);
    let alpha = a.alpha.unwrap_or(0.05);

    let mut out = ctx.create("predictions.csv")?;
    writeln!(out, "time,method,tau,prediction,lower,upper")?;
    for &tau in ctx.taus.levels() {
        for &m in &methods {
            let fitted = Fitted::fit(m, &train, tau)?;
            for (t, x) in test.times().iter().zip(test.covariates()) {
                let (pred, lo, hi) = match (&fitted, with_ci) {
                    (Fitted::Np(model, _), true) => match model.confidence_interval(x, alpha) {
                        Ok(ci) => (Some(ci.point), Some(ci.lower), Some(ci.upper)),
                        Err(e) => {
                            eprintln!("warning: {} at {t}, tau {tau}: {e}", m.name());
                            (None, None, None)
                        }
                    },
                    _ => match fitted.predictor().predict(x) {
                        Ok(v) => (Some(v), None, None),
                        Err(e) => {
                            eprintln!("warning: {} at {t}, tau {tau}: {e}", m.name());
                            (None, None, None)
                        }
                    },
                };
                writeln!(
                    out,
                    "{t},{},{tau},{},{},{}",
                    m.name(),
                    fmt_opt(pred),
                    fmt_opt(lo),
                    fmt_opt(hi)
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_windows(ctx: &Context, a: WindowsArgs) -> Result<()> {
    let methods = parse_methods(a.methods.as_deref().unwrap_or("kb,js,np"))?;
    let data = load_data(&a.data, None)?;
    let anchor = a
        .anchor
        .as_deref()
        .ok_or_else(|| Error::Configuration("--anchor is required".into()))?;
    let anchor = TimeId::parse(anchor)
        .ok_or_else(|| Error::Configuration(format!("cannot parse anchor '{anchor}'")))?;
    let unit: WindowUnit = match &a.unit {
        Some(u) => u.parse()?,
        None if anchor.is_date() => WindowUnit::Month,
        None => WindowUnit::Index,
    };
    let params = WindowParams {
        anchor,
        length: a.length.unwrap_or(1),
        step: a.step.unwrap_or(1),
        unit,
    };
    let plan = rolling_windows(data.times(), &params)?;

    let mut out = ctx.create("windows.csv")?;
    writeln!(
        out,
        "window,forecast_start,forecast_end,train_end,method,tau,prediction_rmse,prediction_mape,test_points,failures,status"
    )?;
    for s in &plan.skipped {
        eprintln!(
            "warning: window {}..{} skipped: {}",
            s.forecast_start, s.forecast_end, s.reason
        );
        writeln!(
            out,
            "NA,{},{},NA,NA,NA,NA,NA,0,0,skipped: {}",
            s.forecast_start, s.forecast_end, s.reason
        )?;
    }
    for (wi, w) in plan.windows.iter().enumerate() {
        let train = data.select(&w.train)?;
        let test = data.select(&w.test)?;
        let status = if w.truncated { "truncated" } else { "ok" };
        for &tau in ctx.taus.levels() {
            let train_q = quantile_series(&train, tau)?.values;
            let test_q = quantile_series(&test, tau)?.values;
            for &m in &methods {
                let row_prefix = format!(
                    "{},{},{},{},{},{tau}",
                    wi + 1,
                    w.forecast_start,
                    w.forecast_end,
                    w.train_end,
                    m.name()
                );
                let result = Fitted::fit(m, &train, tau).and_then(|f| {
                    evaluate_method(
                        f.predictor().as_ref(),
                        train.covariates(),
                        &train_q,
                        test.covariates(),
                        &test_q,
                    )
                });
                match result {
                    Ok(r) => writeln!(
                        out,
                        "{row_prefix},{},{},{},{},{status}",
                        crate::format_f64(r.prediction_rmse),
                        fmt_opt(r.prediction_mape),
                        w.test.len(),
                        r.prediction_failures
                    )?,
                    Err(e) => {
                        eprintln!("warning: window {} {} tau {tau}: {e}", wi + 1, m.name());
                        writeln!(
                            out,
                            "{row_prefix},NA,NA,{},{},failed: {}",
                            w.test.len(),
                            w.test.len(),
                            e.to_string().replace(',', ";")
                        )?
                    }
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Configuration(format!("range '{s}' is not LO,HI"));
    let (lo, hi) = s.split_once(',').ok_or_else(bad)?;
    Ok((
        lo.trim().parse().map_err(|_| bad())?,
        hi.trim().parse().map_err(|_| bad())?,
    ))
}

fn cmd_grid(ctx: &Context, a: GridArgs) -> Result<()> {
    let data = load_data(&a.data, None)?;
    let axis = |name: &Option<String>, flag: &str| -> Result<usize> {
        let name = name
            .as_deref()
            .ok_or_else(|| Error::Configuration(format!("--{flag} is required")))?;
        data.column_index(name)
            .ok_or_else(|| Error::Configuration(format!("unknown covariate '{name}'")))
    };
    let (ai, aj) = (axis(&a.axis_i, "axis-i")?, axis(&a.axis_j, "axis-j")?);

    // default for the other covariates: training mean of continuous
    // columns, last observed value otherwise
    let n = data.len() as f64;
    let mut fixed: Vec<f64> = (0..data.dim())
        .map(|j| match data.kinds()[j] {
            CovariateKind::Continuous => data.covariates().iter().map(|r| r[j]).sum::<f64>() / n,
            _ => data.covariates().last().expect("nonempty")[j],
        })
        .collect();
    for f in &a.fixed {
        let (name, value) = f
            .split_once('=')
            .ok_or_else(|| Error::Configuration(format!("--fixed '{f}' is not NAME=VALUE")))?;
        let j = data
            .column_index(name.trim())
            .ok_or_else(|| Error::Configuration(format!("unknown covariate '{name}'")))?;
        fixed[j] = value
            .trim()
            .parse()
            .map_err(|_| Error::Configuration(format!("bad value in --fixed '{f}'")))?;
    }

    for &tau in ctx.taus.levels() {
        let model = NpModel::fit(&data, tau, &NpConfig::default())?;
        let spec = GridSpec {
            resolution_i: a.resolution_i.unwrap_or(10),
            resolution_j: a.resolution_j.unwrap_or(10),
            range_i: match &a.range_i {
                Some(r) => parse_range(r)?,
                None => model.hull(ai),
            },
            range_j: match &a.range_j {
                Some(r) => parse_range(r)?,
                None => model.hull(aj),
            },
        };
        let surface = model.grid_surface(ai, aj, &spec, &fixed)?;
        let mut out = ctx.create(&grid_file_name(tau))?;
        surface.write_csv(&mut out)?;
        out.flush()?;
    }
    Ok(())
}

/// File name of the grid surface for `tau`.
pub fn grid_file_name(tau: f64) -> String {
    format!("grid_tau_{tau}.csv")
}
