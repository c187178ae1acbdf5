//! Forecast metrics, ordered splits and rolling forecast windows.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::benchmarks::LinearQuantileFit;
use crate::error::{Error, Result};
use crate::np::{NpEstimate, NpModel};
use crate::series::TimeId;

fn check_pair(estimates: &[f64], targets: &[f64]) -> Result<()> {
    if estimates.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} estimates for {} targets",
            estimates.len(),
            targets.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::EmptyData("no values to score".into()));
    }
    if estimates.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in metric input".into()));
    }
    Ok(())
}

/// Root mean squared difference.
pub fn rmse(estimates: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(estimates, targets)?;
    let ss: f64 = estimates
        .iter()
        .zip(targets)
        .map(|(e, t)| (e - t).powi(2))
        .sum();
    Ok((ss / estimates.len() as f64).sqrt())
}

/// Mean absolute percentage error, as a fraction.
pub fn mape(estimates: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(estimates, targets)?;
    if let Some(index) = targets.iter().position(|&t| t == 0.0) {
        return Err(Error::DivisionHazard { index });
    }
    let s: f64 = estimates
        .iter()
        .zip(targets)
        .map(|(e, t)| ((e - t) / t).abs())
        .sum();
    Ok(s / estimates.len() as f64)
}

/// First `ceil(fraction * length)` indices train, the rest test.
pub fn ordered_split(length: usize, fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidSplit(format!("fraction {fraction} outside (0, 1)")));
    }
    if length < 2 {
        return Err(Error::InvalidSplit(format!("series of length {length}")));
    }
    let cut = (fraction * length as f64).ceil() as usize;
    if cut == 0 || cut >= length {
        return Err(Error::InvalidSplit(format!(
            "fraction {fraction} of {length} leaves an empty partition"
        )));
    }
    Ok(((0..cut).collect(), (cut..length).collect()))
}

/// Unit in which window lengths and steps are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowUnit {
    /// Integer time tags (e.g. years).
    #[default]
    Index,
    Month,
    Day,
}

impl std::str::FromStr for WindowUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "index" | "year" => Ok(WindowUnit::Index),
            "month" => Ok(WindowUnit::Month),
            "day" => Ok(WindowUnit::Day),
            other => Err(Error::InvalidParameter(format!("unknown window unit '{other}'"))),
        }
    }
}

impl WindowUnit {
    fn position(self, t: &TimeId) -> Result<i64> {
        match (self, t) {
            (WindowUnit::Index, TimeId::Index(i)) => Ok(*i),
            (WindowUnit::Month, TimeId::Date(d)) => Ok(d.year() as i64 * 12 + d.month0() as i64),
            (WindowUnit::Day, TimeId::Date(d)) => Ok(d.num_days_from_ce() as i64),
            _ => Err(Error::Configuration(format!(
                "window unit {self:?} does not apply to time {t}"
            ))),
        }
    }

    fn label(self, pos: i64) -> TimeId {
        match self {
            WindowUnit::Index => TimeId::Index(pos),
            WindowUnit::Month => TimeId::Date(
                NaiveDate::from_ymd_opt(pos.div_euclid(12) as i32, pos.rem_euclid(12) as u32 + 1, 1)
                    .expect("valid month"),
            ),
            WindowUnit::Day => TimeId::Date(
                NaiveDate::from_num_days_from_ce_opt(pos as i32).expect("valid day"),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    /// Start of the first forecast period.
    pub anchor: TimeId,
    pub length: u32,
    pub step: u32,
    pub unit: WindowUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub forecast_start: TimeId,
    /// Inclusive end of the forecast period.
    pub forecast_end: TimeId,
    /// Last training time (strictly before `forecast_start`).
    pub train_end: TimeId,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Set when the period was cut at the end of the data.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedWindow {
    pub forecast_start: TimeId,
    pub forecast_end: TimeId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WindowPlan {
    pub windows: Vec<Window>,
    pub skipped: Vec<SkippedWindow>,
    pub step: u32,
    pub length: u32,
}

/// Forecast periods of `length` units starting at the anchor and advancing
/// by `step`. Each window trains on every time strictly before its start.
/// Periods must fit inside the data; only when not even the first one fits
/// is a single truncated window emitted (flagged).
pub fn rolling_windows(times: &[TimeId], params: &WindowParams) -> Result<WindowPlan> {
    if params.length == 0 || params.step == 0 {
        return Err(Error::InvalidParameter("window length and step must be at least 1".into()));
    }
    if times.is_empty() {
        return Err(Error::EmptyData("no time points".into()));
    }
    let unit = params.unit;
    let pos: Vec<i64> = times.iter().map(|t| unit.position(t)).collect::<Result<_>>()?;
    let last = *pos.iter().max().unwrap();
    let mut start = unit.position(&params.anchor)?;
    let mut plan = WindowPlan {
        step: params.step,
        length: params.length,
        ..WindowPlan::default()
    };
    loop {
        let full_end = start + params.length as i64 - 1;
        let truncated = full_end > last;
        if start > last || (truncated && !(plan.windows.is_empty() && plan.skipped.is_empty())) {
            break;
        }
        let end = full_end.min(last);
        let train: Vec<usize> = (0..pos.len()).filter(|&i| pos[i] < start).collect();
        let test: Vec<usize> = (0..pos.len())
            .filter(|&i| pos[i] >= start && pos[i] <= end)
            .collect();
        let skip = |reason: &str| SkippedWindow {
            forecast_start: unit.label(start),
            forecast_end: unit.label(full_end),
            reason: reason.to_string(),
        };
        if test.is_empty() {
            plan.skipped.push(skip("no data in the forecast period"));
        } else if train.is_empty() {
            plan.skipped.push(skip("no data before the forecast period"));
        } else {
            let train_end = times[*train.iter().max_by_key(|&&i| pos[i]).unwrap()];
            plan.windows.push(Window {
                forecast_start: unit.label(start),
                forecast_end: unit.label(end),
                train_end,
                train,
                test,
                truncated,
            });
        }
        if truncated {
            break;
        }
        start += params.step as i64;
    }
    Ok(plan)
}

/// Anything that maps a covariate vector to a quantile prediction.
pub trait QuantilePredictor {
    fn predict(&self, x: &[f64]) -> Result<f64>;
}

impl QuantilePredictor for LinearQuantileFit {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        crate::benchmarks::predict_linear(self, x)
    }
}

/// [`NpModel`] paired with the estimate it reports.
pub struct NpPredictor<'a> {
    pub model: &'a NpModel,
    pub estimate: NpEstimate,
}

impl QuantilePredictor for NpPredictor<'_> {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        self.model.predict(x, self.estimate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub training_rmse: f64,
    pub prediction_rmse: f64,
    /// `None` when a test target is zero.
    pub prediction_mape: Option<f64>,
    /// `(steps ahead, squared error)`, NaN where the prediction failed.
    pub per_horizon: Vec<(usize, f64)>,
    pub training_failures: usize,
    pub prediction_failures: usize,
}

fn score<P: QuantilePredictor + ?Sized>(
    predictor: &P,
    xs: &[Vec<f64>],
    targets: &[f64],
) -> Result<(Vec<Option<f64>>, usize)> {
    if xs.len() != targets.len() {
        return Err(Error::InvalidInput("covariates and targets differ in length".into()));
    }
    let preds: Vec<Option<f64>> = xs.iter().map(|x| predictor.predict(x).ok()).collect();
    let failures = preds.iter().filter(|p| p.is_none()).count();
    Ok((preds, failures))
}

fn successful(preds: &[Option<f64>], targets: &[f64]) -> (Vec<f64>, Vec<f64>) {
    preds
        .iter()
        .zip(targets)
        .filter_map(|(p, t)| p.map(|p| (p, *t)))
        .unzip()
}

/// Scores a predictor on a training and a test partition. Points where the
/// predictor fails are excluded from the means and counted; a partition
/// with no successful point reports NaN.
pub fn evaluate_method<P: QuantilePredictor + ?Sized>(
    predictor: &P,
    train_x: &[Vec<f64>],
    train_targets: &[f64],
    test_x: &[Vec<f64>],
    test_targets: &[f64],
) -> Result<EvalResult> {
    let (train_preds, training_failures) = score(predictor, train_x, train_targets)?;
    let (test_preds, prediction_failures) = score(predictor, test_x, test_targets)?;
    let (e, t) = successful(&train_preds, train_targets);
    let training_rmse = if e.is_empty() { f64::NAN } else { rmse(&e, &t)? };
    let (e, t) = successful(&test_preds, test_targets);
    let (prediction_rmse, prediction_mape) = if e.is_empty() {
        (f64::NAN, None)
    } else {
        let m = match mape(&e, &t) {
            Ok(v) => Some(v),
            Err(Error::DivisionHazard { .. }) => None,
            Err(err) => return Err(err),
        };
        (rmse(&e, &t)?, m)
    };
    let per_horizon = test_preds
        .iter()
        .zip(test_targets)
        .enumerate()
        .map(|(h, (p, t))| (h + 1, p.map_or(f64::NAN, |p| (p - t).powi(2))))
        .collect();
    Ok(EvalResult {
        training_rmse,
        prediction_rmse,
        prediction_mape,
        per_horizon,
        training_failures,
        prediction_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn metric_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - (12.5f64).sqrt()).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!((mape(&[1.1], &[1.0]).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(
            mape(&[1.0, 1.0], &[2.0, 0.0]),
            Err(Error::DivisionHazard { index: 1 })
        ));
    }

    #[test]
    fn split_examples() {
        let (tr, te) = ordered_split(10, 0.8).unwrap();
        assert_eq!(tr, (0..8).collect::<Vec<_>>());
        assert_eq!(te, vec![8, 9]);
        let (tr, te) = ordered_split(104, 0.8).unwrap();
        assert_eq!((tr.len(), te.len()), (84, 20));
        let (tr, te) = ordered_split(104, 0.79).unwrap();
        assert_eq!((tr.len(), te.len()), (83, 21));
        assert_eq!(ordered_split(2, 0.5).unwrap(), (vec![0], vec![1]));
        assert!(ordered_split(1, 0.5).is_err());
        assert!(ordered_split(5, 0.99).is_err());
    }

    #[test]
    fn yearly_windows() {
        let times: Vec<TimeId> = (1899..=2008).map(TimeId::Index).collect();
        let plan = rolling_windows(
            &times,
            &WindowParams {
                anchor: TimeId::Index(1991),
                length: 10,
                step: 2,
                unit: WindowUnit::Index,
            },
        )
        .unwrap();
        let periods: Vec<(TimeId, TimeId)> = plan
            .windows
            .iter()
            .map(|w| (w.forecast_start, w.forecast_end))
            .collect();
        let expected: Vec<(TimeId, TimeId)> = [1991, 1993, 1995, 1997, 1999]
            .iter()
            .map(|&s| (TimeId::Index(s), TimeId::Index(s + 9)))
            .collect();
        assert_eq!(periods, expected);
        for w in &plan.windows {
            assert!(!w.truncated);
            let start = match w.forecast_start {
                TimeId::Index(s) => s,
                _ => unreachable!(),
            };
            assert!(w.train.iter().all(|&i| times[i] < TimeId::Index(start)));
            assert_eq!(w.test.len(), 10);
        }
    }

    #[test]
    fn monthly_windows_over_daily_data() {
        let mut times = Vec::new();
        let mut d = NaiveDate::from_ymd_opt(2019, 7, 1).unwrap();
        while d <= NaiveDate::from_ymd_opt(2020, 6, 30).unwrap() {
            times.push(TimeId::Date(d));
            d = d.succ_opt().unwrap();
        }
        let plan = rolling_windows(
            &times,
            &WindowParams {
                anchor: TimeId::parse("2020-01").unwrap(),
                length: 1,
                step: 1,
                unit: WindowUnit::Month,
            },
        )
        .unwrap();
        assert_eq!(plan.windows.len(), 6);
        assert_eq!(plan.windows[1].test.len(), 29);
    }

    #[test]
    fn oversized_window_is_truncated_once() {
        let times: Vec<TimeId> = (0..20).map(TimeId::Index).collect();
        let plan = rolling_windows(
            &times,
            &WindowParams {
                anchor: TimeId::Index(15),
                length: 10,
                step: 50,
                unit: WindowUnit::Index,
            },
        )
        .unwrap();
        assert_eq!(plan.windows.len(), 1);
        assert!(plan.windows[0].truncated);
        assert_eq!(plan.windows[0].test.len(), 5);
    }

    #[test]
    fn gap_window_is_skipped() {
        let times: Vec<TimeId> = [1, 2, 3, 4, 9, 10].into_iter().map(TimeId::Index).collect();
        let plan = rolling_windows(
            &times,
            &WindowParams {
                anchor: TimeId::Index(3),
                length: 2,
                step: 2,
                unit: WindowUnit::Index,
            },
        )
        .unwrap();
        assert_eq!(plan.windows.len(), 2);
        assert_eq!(plan.skipped.len(), 2);
    }

    struct Fixed(Vec<Option<f64>>);

    impl QuantilePredictor for Fixed {
        fn predict(&self, x: &[f64]) -> Result<f64> {
            self.0[x[0] as usize].ok_or_else(|| Error::UnsupportedQuery("hole".into()))
        }
    }

    #[test]
    fn evaluation_composes_metrics() {
        let p = Fixed(vec![Some(1.0), Some(2.0), Some(3.5), None, Some(4.0)]);
        let xs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let targets = [1.0, 2.5, 3.0, 3.0, 5.0];
        let r = evaluate_method(&p, &xs[..2], &targets[..2], &xs[2..], &targets[2..]).unwrap();
        assert!((r.training_rmse - rmse(&[1.0, 2.0], &[1.0, 2.5]).unwrap()).abs() < 1e-15);
        assert!((r.prediction_rmse - rmse(&[3.5, 4.0], &[3.0, 5.0]).unwrap()).abs() < 1e-15);
        assert!((r.prediction_mape.unwrap() - mape(&[3.5, 4.0], &[3.0, 5.0]).unwrap()).abs() < 1e-15);
        assert_eq!(r.prediction_failures, 1);
        assert_eq!(r.per_horizon.len(), 3);
        assert!(r.per_horizon[1].1.is_nan());
        let ok: Vec<f64> = r.per_horizon.iter().map(|p| p.1).filter(|v| !v.is_nan()).collect();
        let mean = ok.iter().sum::<f64>() / ok.len() as f64;
        assert!((mean.sqrt() - r.prediction_rmse).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn rmse_symmetric_and_shift_invariant(
            pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..30),
            c in -50.0f64..50.0,
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let r = rmse(&a, &b).unwrap();
            prop_assert!((r - rmse(&b, &a).unwrap()).abs() < 1e-12);
            let a2: Vec<f64> = a.iter().map(|v| v + c).collect();
            let b2: Vec<f64> = b.iter().map(|v| v + c).collect();
            prop_assert!((r - rmse(&a2, &b2).unwrap()).abs() < 1e-9 * (1.0 + r));
        }

        #[test]
        fn mape_scale_invariant(
            pairs in prop::collection::vec((-100.0f64..100.0, 0.5f64..100.0), 1..30),
            s in 0.1f64..10.0,
        ) {
            let (e, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = mape(&e, &t).unwrap();
            let e2: Vec<f64> = e.iter().map(|v| v * s).collect();
            let t2: Vec<f64> = t.iter().map(|v| v * s).collect();
            prop_assert!((m - mape(&e2, &t2).unwrap()).abs() < 1e-9 * (1.0 + m));
        }

        #[test]
        fn split_is_ordered(len in 2usize..500, frac in 0.01f64..0.99) {
            if let Ok((tr, te)) = ordered_split(len, frac) {
                prop_assert_eq!(tr.len() + te.len(), len);
                prop_assert!(tr.last().unwrap() < te.first().unwrap());
            }
        }
    }
}
