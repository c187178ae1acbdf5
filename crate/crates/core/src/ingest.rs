//! Reading long-format replicated data and building design matrices.
//!
//! Input is a CSV file with a header row and one row per replicate
//! observation. Rows are grouped by their time value; every covariate must be
//! constant within a group.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{CovariateKind, ReplicatedSeries, TimeId, Transform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateColumn {
    pub name: String,
    #[serde(default = "continuous")]
    pub kind: CovariateKind,
}

fn continuous() -> CovariateKind {
    CovariateKind::Continuous
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignFlags {
    pub intercept: bool,
    pub linear_trend: bool,
    pub monthly_dummies: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSpec {
    pub path: PathBuf,
    pub time_column: String,
    pub response_column: String,
    pub covariates: Vec<CovariateColumn>,
    pub min_replicates: usize,
    pub transform: Transform,
    pub design: DesignFlags,
    /// Drop rows whose response is negative before grouping.
    pub drop_negative: bool,
}

impl Default for IngestSpec {
    fn default() -> Self {
        IngestSpec {
            path: PathBuf::new(),
            time_column: "time".into(),
            response_column: "y".into(),
            covariates: Vec::new(),
            min_replicates: 10,
            transform: Transform::None,
            design: DesignFlags::default(),
            drop_negative: false,
        }
    }
}

struct Group {
    covariates: Vec<f64>,
    replicates: Vec<f64>,
}

fn parse_number(cell: &str, line: u64, column: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Err(Error::Parse {
            line,
            message: format!("empty cell in column '{column}'"),
        });
    }
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("cannot parse '{cell}' in column '{column}' as a number"),
        })
}

/// Groups the rows of the spec's CSV file by time. Only the listed
/// covariate columns are kept; no filtering, transform or design columns
/// are applied here.
pub fn read_replicated_csv(spec: &IngestSpec) -> Result<ReplicatedSeries> {
    let file = std::fs::File::open(&spec.path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", spec.path.display()),
        ))
    })?;
    read_replicated(file, spec)
}

/// Same as [`read_replicated_csv`] on any reader.
pub fn read_replicated<R: std::io::Read>(reader: R, spec: &IngestSpec) -> Result<ReplicatedSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Configuration(format!("column '{name}' not found in header")))
    };
    let time_col = column(&spec.time_column)?;
    let y_col = column(&spec.response_column)?;
    let cov_cols: Vec<usize> = spec
        .covariates
        .iter()
        .map(|c| column(&c.name))
        .collect::<Result<_>>()?;

    let mut groups: BTreeMap<TimeId, Group> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |i: usize| record.get(i).unwrap_or("");
        let raw_time = cell(time_col);
        let time = TimeId::parse(raw_time).ok_or_else(|| Error::Parse {
            line,
            message: format!("cannot parse time '{raw_time}'"),
        })?;
        let y = parse_number(cell(y_col), line, &spec.response_column)?;
        if spec.drop_negative && y < 0.0 {
            continue;
        }
        let covs: Vec<f64> = cov_cols
            .iter()
            .zip(&spec.covariates)
            .map(|(&i, c)| parse_number(cell(i), line, &c.name))
            .collect::<Result<_>>()?;
        match groups.get_mut(&time) {
            Some(g) => {
                if g.covariates != covs {
                    return Err(Error::InconsistentReplication {
                        time: time.to_string(),
                    });
                }
                g.replicates.push(y);
            }
            None => {
                groups.insert(
                    time,
                    Group {
                        covariates: covs,
                        replicates: vec![y],
                    },
                );
            }
        }
    }
    if groups.is_empty() {
        return Err(Error::EmptyData(format!("no usable rows in {}", spec.path.display())));
    }
    let mut times = Vec::with_capacity(groups.len());
    let mut covariates = Vec::with_capacity(groups.len());
    let mut replicates = Vec::with_capacity(groups.len());
    for (t, g) in groups {
        times.push(t);
        covariates.push(g.covariates);
        replicates.push(g.replicates);
    }
    ReplicatedSeries::new(
        times,
        covariates,
        replicates,
        spec.covariates.iter().map(|c| c.kind).collect(),
        spec.covariates.iter().map(|c| c.name.clone()).collect(),
    )
}

/// Drops time points with fewer than `min_count` replicates; returns the
/// filtered series and the number of dropped points.
pub fn filter_replicates(data: &ReplicatedSeries, min_count: usize) -> Result<(ReplicatedSeries, usize)> {
    if min_count == 0 {
        return Err(Error::InvalidParameter("minimum replicate count must be at least 1".into()));
    }
    let keep: Vec<usize> = (0..data.len())
        .filter(|&t| data.replicates()[t].len() >= min_count)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyResult(format!(
            "every time point has fewer than {min_count} replicates"
        )));
    }
    let dropped = data.len() - keep.len();
    Ok((data.select(&keep)?, dropped))
}

/// Applies `kind` to every replicate.
pub fn transform_response(data: &ReplicatedSeries, kind: Transform) -> Result<ReplicatedSeries> {
    if kind == Transform::None {
        return Ok(data.clone());
    }
    if data.transform() != Transform::None {
        return Err(Error::Configuration(format!(
            "response already transformed with {}",
            data.transform().name()
        )));
    }
    let replicates = data
        .replicates()
        .iter()
        .zip(data.times())
        .map(|(reps, t)| {
            reps.iter()
                .map(|&y| {
                    kind.apply(y).ok_or_else(|| Error::TransformDomain {
                        time: t.to_string(),
                        value: y,
                        transform: kind.name().to_string(),
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(data.with_replicates(replicates, kind))
}

/// Undoes the series' response transform.
pub fn inverse_transform(data: &ReplicatedSeries) -> ReplicatedSeries {
    let kind = data.transform();
    let replicates = data
        .replicates()
        .iter()
        .map(|reps| reps.iter().map(|&v| kind.inverse(v)).collect())
        .collect();
    data.with_replicates(replicates, Transform::None)
}

/// Prepends design columns: an intercept, a trend `t / denominator` over
/// the 1-based position `t` (the denominator defaults to the series length,
/// so trend values past it extrapolate linearly), and February through
/// December indicators. Existing columns follow.
pub fn build_design(
    data: &ReplicatedSeries,
    flags: DesignFlags,
    trend_denominator: Option<usize>,
) -> Result<ReplicatedSeries> {
    if flags.monthly_dummies && !data.times().iter().all(TimeId::is_date) {
        return Err(Error::Configuration(
            "monthly dummies need calendar dates in the time column".into(),
        ));
    }
    let denom = trend_denominator.unwrap_or(data.len());
    if flags.linear_trend && denom == 0 {
        return Err(Error::Configuration("trend denominator must be positive".into()));
    }
    let mut kinds = Vec::new();
    let mut names = Vec::new();
    if flags.intercept {
        kinds.push(CovariateKind::Deterministic);
        names.push("intercept".to_string());
    }
    if flags.linear_trend {
        kinds.push(CovariateKind::Deterministic);
        names.push("trend".to_string());
    }
    if flags.monthly_dummies {
        for m in 2..=12 {
            kinds.push(CovariateKind::Binary);
            names.push(format!("month_{m:02}"));
        }
    }
    for (k, n) in data.kinds().iter().zip(data.names()) {
        if names.contains(n) {
            return Err(Error::Configuration(format!("duplicate covariate name '{n}'")));
        }
        kinds.push(*k);
        names.push(n.clone());
    }
    let covariates = data
        .times()
        .iter()
        .zip(data.covariates())
        .enumerate()
        .map(|(i, (t, existing))| {
            let mut row = Vec::with_capacity(kinds.len());
            if flags.intercept {
                row.push(1.0);
            }
            if flags.linear_trend {
                row.push((i + 1) as f64 / denom as f64);
            }
            if flags.monthly_dummies {
                let month = t.month().expect("checked calendar times");
                row.extend((2..=12).map(|m| if m == month { 1.0 } else { 0.0 }));
            }
            row.extend_from_slice(existing);
            row
        })
        .collect();
    Ok(data.with_covariates(covariates, kinds, names))
}

/// Summary of the preprocessing performed by [`load`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub groups_read: usize,
    pub dropped: usize,
}

/// Read, filter, transform and expand the design per the spec.
pub fn load(spec: &IngestSpec, trend_denominator: Option<usize>) -> Result<(ReplicatedSeries, IngestSummary)> {
    let raw = read_replicated_csv(spec)?;
    let groups_read = raw.len();
    let (filtered, dropped) = filter_replicates(&raw, spec.min_replicates)?;
    let transformed = transform_response(&filtered, spec.transform)?;
    let designed = build_design(&transformed, spec.design, trend_denominator)?;
    Ok((designed, IngestSummary { groups_read, dropped }))
}

/// Canonical long-format CSV: `time,y,<covariates...>`, times ascending,
/// replicates in stored order.
pub fn write_long_csv<W: Write>(data: &ReplicatedSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string(), "y".to_string()];
    header.extend(data.names().iter().cloned());
    w.write_record(&header)?;
    for ((t, x), reps) in data.times().iter().zip(data.covariates()).zip(data.replicates()) {
        for &y in reps {
            let mut rec = vec![t.to_string(), crate::format_f64(y)];
            rec.extend(x.iter().map(|&v| crate::format_f64(v)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec_with(covs: &[(&str, CovariateKind)]) -> IngestSpec {
        IngestSpec {
            covariates: covs
                .iter()
                .map(|(n, k)| CovariateColumn {
                    name: n.to_string(),
                    kind: *k,
                })
                .collect(),
            ..IngestSpec::default()
        }
    }

    fn read(text: &str, spec: &IngestSpec) -> Result<ReplicatedSeries> {
        read_replicated(text.as_bytes(), spec)
    }

    #[test]
    fn groups_rows_by_time() {
        let spec = spec_with(&[("sst", CovariateKind::Continuous)]);
        let s = read("time,y,sst\n1999,1,0.5\n1999,2,0.5\n1999,3,0.5\n", &spec).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.replicates()[0], vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn varying_covariate_is_an_error() {
        let spec = spec_with(&[("sst", CovariateKind::Continuous)]);
        let err = read("time,y,sst\n1999,1,0.5\n1999,2,0.6\n", &spec).unwrap_err();
        assert!(matches!(err, Error::InconsistentReplication { time } if time == "1999"));
    }

    #[test]
    fn times_are_sorted() {
        let spec = spec_with(&[]);
        let s = read("time,y\n2001,1\n1999,2\n2000,3\n", &spec).unwrap();
        let t: Vec<String> = s.times().iter().map(ToString::to_string).collect();
        assert_eq!(t, ["1999", "2000", "2001"]);
    }

    #[test]
    fn bad_cells_report_lines() {
        let spec = spec_with(&[]);
        assert!(matches!(
            read("time,y\n1999,1\n1999,\n", &spec),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            read("time,y\n1999,abc\n", &spec),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read("when,y\n1999,1\n", &spec),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn negative_rows_dropped_on_request() {
        let mut spec = spec_with(&[]);
        spec.drop_negative = true;
        let s = read("time,y\n2020-01-01,-1\n2020-01-01,4\n", &spec).unwrap();
        assert_eq!(s.replicates()[0], vec![4.0]);
    }

    fn counts_series(counts: &[usize]) -> ReplicatedSeries {
        ReplicatedSeries::new(
            (0..counts.len() as i64).map(TimeId::Index).collect(),
            vec![vec![]; counts.len()],
            counts.iter().map(|&c| vec![1.0; c]).collect(),
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn filtering_is_inclusive() {
        let (s, dropped) = filter_replicates(&counts_series(&[5, 10, 47]), 10).unwrap();
        assert_eq!(s.counts(), vec![10, 47]);
        assert_eq!(dropped, 1);
        let (s, _) = filter_replicates(&counts_series(&[5, 10, 47]), 1).unwrap();
        assert_eq!(s.len(), 3);
        assert!(matches!(
            filter_replicates(&counts_series(&[1, 2]), 3),
            Err(Error::EmptyResult(_))
        ));
    }

    #[test]
    fn transforms() {
        let s = ReplicatedSeries::new(
            vec![TimeId::Index(1)],
            vec![vec![]],
            vec![vec![49.0, 0.0, 99.0]],
            vec![],
            vec![],
        )
        .unwrap();
        let r = transform_response(&s, Transform::Sqrt).unwrap();
        assert_eq!(r.replicates()[0][0], 7.0);
        let l = transform_response(&s, Transform::Log1p).unwrap();
        assert_eq!(l.replicates()[0][1], 0.0);
        assert!((l.replicates()[0][2] - 100f64.ln()).abs() < 1e-14);
        let neg = s.with_replicates(vec![vec![-4.0]], Transform::None);
        assert!(matches!(
            transform_response(&neg, Transform::Sqrt),
            Err(Error::TransformDomain { .. })
        ));
    }

    #[test]
    fn design_columns() {
        let s = counts_series(&[1; 5]);
        let d = build_design(&s, DesignFlags { intercept: true, ..Default::default() }, None).unwrap();
        assert_eq!(d.covariates(), vec![vec![1.0]; 5].as_slice());
        let s4 = counts_series(&[1; 4]);
        let d = build_design(&s4, DesignFlags { linear_trend: true, ..Default::default() }, None).unwrap();
        let trend: Vec<f64> = d.covariates().iter().map(|r| r[0]).collect();
        assert_eq!(trend, vec![0.25, 0.5, 0.75, 1.0]);
        let months = DesignFlags { monthly_dummies: true, ..Default::default() };
        assert!(matches!(build_design(&s4, months, None), Err(Error::Configuration(_))));
    }

    #[test]
    fn march_dummy() {
        let s = ReplicatedSeries::new(
            vec![TimeId::parse("2020-03-15").unwrap()],
            vec![vec![]],
            vec![vec![1.0]],
            vec![],
            vec![],
        )
        .unwrap();
        let flags = DesignFlags { monthly_dummies: true, ..Default::default() };
        let d = build_design(&s, flags, None).unwrap();
        let row = &d.covariates()[0];
        assert_eq!(row.len(), 11);
        assert_eq!(row.iter().sum::<f64>(), 1.0);
        assert_eq!(row[1], 1.0);
        assert_eq!(d.names()[1], "month_03");
        assert!(d.kinds().iter().all(|k| *k == CovariateKind::Binary));
    }

    proptest! {
        #[test]
        fn filter_composes_as_max(counts in prop::collection::vec(1usize..30, 1..20), m1 in 1usize..15, m2 in 1usize..15) {
            let s = counts_series(&counts);
            let once = filter_replicates(&s, m1.max(m2));
            let twice = filter_replicates(&s, m1).and_then(|(a, _)| filter_replicates(&a, m2));
            match (once, twice) {
                (Ok((a, _)), Ok((b, _))) => prop_assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "filters disagree"),
            }
        }

        #[test]
        fn transform_roundtrip(values in prop::collection::vec(0.0f64..1e6, 1..20)) {
            let s = ReplicatedSeries::new(vec![TimeId::Index(0)], vec![vec![]], vec![values.clone()], vec![], vec![]).unwrap();
            for kind in [Transform::Sqrt, Transform::Log1p] {
                let back = inverse_transform(&transform_response(&s, kind).unwrap());
                for (a, b) in back.replicates()[0].iter().zip(&values) {
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300) + 1e-300);
                }
            }
        }

        #[test]
        fn csv_roundtrip(
            rows in prop::collection::vec((prop::collection::vec(-1e3f64..1e3, 1..5), -10.0f64..10.0), 1..8)
        ) {
            let times: Vec<TimeId> = (0..rows.len() as i64).map(|i| TimeId::Index(1900 + i)).collect();
            let s = ReplicatedSeries::new(
                times,
                rows.iter().map(|r| vec![r.1]).collect(),
                rows.iter().map(|r| r.0.clone()).collect(),
                vec![CovariateKind::Continuous],
                vec!["sst".into()],
            ).unwrap();
            let mut buf = Vec::new();
            write_long_csv(&s, &mut buf).unwrap();
            let spec = spec_with(&[("sst", CovariateKind::Continuous)]);
            let back = read_replicated(buf.as_slice(), &spec).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
