//! Replicated time-series containers.
//!
//! A [`ReplicatedSeries`] pairs one covariate vector `X_t` with a nonempty,
//! variable-length set of responses `{Y_tj}` at every time point. Replicates
//! are stored in ingestion order; nothing downstream relies on that order.

use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{check_tau, Error, Result};

/// Opaque ordered time tag. A series uses a single variant throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeId {
    Index(i64),
    Date(NaiveDate),
}

impl TimeId {
    /// Parses a plain integer (e.g. a year), an ISO date `YYYY-MM-DD`, or a
    /// month `YYYY-MM` (mapped to the first of the month).
    pub fn parse(s: &str) -> Option<TimeId> {
        let s = s.trim();
        if let Ok(i) = s.parse::<i64>() {
            return Some(TimeId::Index(i));
        }
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Some(TimeId::Date(d));
        }
        NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d")
            .ok()
            .map(TimeId::Date)
    }

    pub fn month(&self) -> Option<u32> {
        match self {
            TimeId::Date(d) => Some(d.month()),
            TimeId::Index(_) => None,
        }
    }

    pub fn is_date(&self) -> bool {
        matches!(self, TimeId::Date(_))
    }
}

impl fmt::Display for TimeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeId::Index(i) => write!(f, "{i}"),
            TimeId::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

/// How a covariate dimension enters the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Continuous,
    Binary,
    Deterministic,
}

impl std::str::FromStr for CovariateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "continuous" | "c" => Ok(CovariateKind::Continuous),
            "binary" | "b" => Ok(CovariateKind::Binary),
            "deterministic" | "d" => Ok(CovariateKind::Deterministic),
            other => Err(Error::Configuration(format!(
                "unknown covariate kind '{other}' (expected continuous, binary or deterministic)"
            ))),
        }
    }
}

/// Elementwise response transform applied at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    None,
    Sqrt,
    Log1p,
}

impl Transform {
    pub fn apply(self, y: f64) -> Option<f64> {
        match self {
            Transform::None => Some(y),
            Transform::Sqrt if y >= 0.0 => Some(y.sqrt()),
            Transform::Log1p if y > -1.0 => Some(y.ln_1p()),
            _ => None,
        }
    }

    pub fn inverse(self, v: f64) -> f64 {
        match self {
            Transform::None => v,
            Transform::Sqrt => v * v,
            Transform::Log1p => v.exp_m1(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::None => "none",
            Transform::Sqrt => "sqrt",
            Transform::Log1p => "log1p",
        }
    }
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Transform::None),
            "sqrt" => Ok(Transform::Sqrt),
            "log1p" => Ok(Transform::Log1p),
            other => Err(Error::Configuration(format!("unknown transform '{other}'"))),
        }
    }
}

/// Per-time covariates plus variable-length replicate response sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicatedSeries {
    times: Vec<TimeId>,
    covariates: Vec<Vec<f64>>,
    replicates: Vec<Vec<f64>>,
    kinds: Vec<CovariateKind>,
    names: Vec<String>,
    transform: Transform,
}

impl ReplicatedSeries {
    /// Builds a series, checking every structural invariant. Covariate names
    /// default to `x1, x2, ...` when `names` is empty.
    pub fn new(
        times: Vec<TimeId>,
        covariates: Vec<Vec<f64>>,
        replicates: Vec<Vec<f64>>,
        kinds: Vec<CovariateKind>,
        names: Vec<String>,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::EmptyData("series has no time points".into()));
        }
        if covariates.len() != n || replicates.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} times but {} covariate rows and {} replicate sets",
                n,
                covariates.len(),
                replicates.len()
            )));
        }
        let d = kinds.len();
        let names = if names.is_empty() {
            (1..=d).map(|i| format!("x{i}")).collect()
        } else {
            names
        };
        if names.len() != d {
            return Err(Error::InvalidInput(format!(
                "{} covariate names for dimension {d}",
                names.len()
            )));
        }
        for w in times.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidInput(format!(
                    "times must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
            if w[0].is_date() != w[1].is_date() {
                return Err(Error::InvalidInput("mixed integer and calendar time tags".into()));
            }
        }
        for (t, (row, reps)) in covariates.iter().zip(&replicates).enumerate() {
            if row.len() != d {
                return Err(Error::InvalidInput(format!(
                    "covariate row at time {} has dimension {} (expected {d})",
                    times[t],
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite covariate at time {}",
                    times[t]
                )));
            }
            if reps.is_empty() {
                return Err(Error::EmptyData(format!("no replicates at time {}", times[t])));
            }
            if reps.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite replicate at time {}",
                    times[t]
                )));
            }
        }
        Ok(ReplicatedSeries {
            times,
            covariates,
            replicates,
            kinds,
            names,
            transform: Transform::None,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.kinds.len()
    }

    pub fn times(&self) -> &[TimeId] {
        &self.times
    }

    pub fn covariates(&self) -> &[Vec<f64>] {
        &self.covariates
    }

    pub fn replicates(&self) -> &[Vec<f64>] {
        &self.replicates
    }

    pub fn kinds(&self) -> &[CovariateKind] {
        &self.kinds
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    pub fn counts(&self) -> Vec<usize> {
        self.replicates.iter().map(Vec::len).collect()
    }

    /// Total number of observations `N = sum_t |Gamma_t|`.
    pub fn total_observations(&self) -> usize {
        self.replicates.iter().map(Vec::len).sum()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Sub-series at the given (ascending) positions.
    pub fn select(&self, indices: &[usize]) -> Result<ReplicatedSeries> {
        if indices.is_empty() {
            return Err(Error::EmptyData("selection is empty".into()));
        }
        let mut out = ReplicatedSeries::new(
            indices.iter().map(|&i| self.times[i]).collect(),
            indices.iter().map(|&i| self.covariates[i].clone()).collect(),
            indices.iter().map(|&i| self.replicates[i].clone()).collect(),
            self.kinds.clone(),
            self.names.clone(),
        )?;
        out.transform = self.transform;
        Ok(out)
    }

    pub(crate) fn with_replicates(&self, replicates: Vec<Vec<f64>>, transform: Transform) -> Self {
        ReplicatedSeries {
            replicates,
            transform,
            ..self.clone()
        }
    }

    pub(crate) fn with_covariates(
        &self,
        covariates: Vec<Vec<f64>>,
        kinds: Vec<CovariateKind>,
        names: Vec<String>,
    ) -> Self {
        ReplicatedSeries {
            covariates,
            kinds,
            names,
            ..self.clone()
        }
    }
}

/// Per-time sample quantiles at one probability level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSeries {
    pub tau: f64,
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
}

impl QuantileSeries {
    /// Wraps precomputed quantile values (every count set to 1 when
    /// `counts` is empty).
    pub fn from_values(tau: f64, values: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        check_tau(tau)?;
        let counts = if counts.is_empty() {
            vec![1; values.len()]
        } else {
            counts
        };
        if counts.len() != values.len() {
            return Err(Error::InvalidInput("counts and values differ in length".into()));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidInput("replicate counts must be positive".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite quantile value".into()));
        }
        Ok(QuantileSeries { tau, values, counts })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Ordered set of probability levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    levels: Vec<f64>,
}

impl TauGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidParameter("tau grid is empty".into()));
        }
        for &t in &levels {
            check_tau(t)?;
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "tau grid must be strictly increasing".into(),
            ));
        }
        Ok(TauGrid { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

impl Default for TauGrid {
    fn default() -> Self {
        TauGrid {
            levels: vec![0.7, 0.8, 0.9, 0.95],
        }
    }
}

impl std::str::FromStr for TauGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let levels = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad tau '{p}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        TauGrid::new(levels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(v: &[i64]) -> Vec<TimeId> {
        v.iter().map(|&i| TimeId::Index(i)).collect()
    }

    #[test]
    fn rejects_unordered_times() {
        let err = ReplicatedSeries::new(
            idx(&[2, 1]),
            vec![vec![0.0], vec![1.0]],
            vec![vec![1.0], vec![2.0]],
            vec![CovariateKind::Continuous],
            vec![],
        );
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_empty_replicate_set() {
        let err = ReplicatedSeries::new(
            idx(&[1, 2]),
            vec![vec![0.0], vec![1.0]],
            vec![vec![1.0], vec![]],
            vec![CovariateKind::Continuous],
            vec![],
        );
        assert!(matches!(err, Err(Error::EmptyData(_))));
    }

    #[test]
    fn rejects_ragged_covariates() {
        let err = ReplicatedSeries::new(
            idx(&[1, 2]),
            vec![vec![0.0], vec![1.0, 2.0]],
            vec![vec![1.0], vec![2.0]],
            vec![CovariateKind::Continuous],
            vec![],
        );
        assert!(err.is_err());
    }

    #[test]
    fn time_parsing() {
        assert_eq!(TimeId::parse("1999"), Some(TimeId::Index(1999)));
        let d = TimeId::parse("2020-03-15").unwrap();
        assert_eq!(d.month(), Some(3));
        assert_eq!(TimeId::parse("2020-03").unwrap().to_string(), "2020-03-01");
        assert!(TimeId::parse("March").is_none());
    }

    #[test]
    fn tau_grid_validation() {
        assert_eq!(TauGrid::default().levels(), &[0.7, 0.8, 0.9, 0.95]);
        assert!("0.9,0.8".parse::<TauGrid>().is_err());
        assert!("0.5,1.0".parse::<TauGrid>().is_err());
        assert_eq!("0.1, 0.5".parse::<TauGrid>().unwrap().levels(), &[0.1, 0.5]);
    }

    #[test]
    fn transform_roundtrip() {
        assert_eq!(Transform::Sqrt.apply(49.0), Some(7.0));
        assert_eq!(Transform::Log1p.apply(0.0), Some(0.0));
        assert!(Transform::Sqrt.apply(-1.0).is_none());
        assert!(Transform::Log1p.apply(-1.0).is_none());
        let v = Transform::Log1p.apply(99.0).unwrap();
        assert!((v - 100f64.ln()).abs() < 1e-12);
        assert!((Transform::Log1p.inverse(v) - 99.0).abs() < 1e-12);
    }
}
