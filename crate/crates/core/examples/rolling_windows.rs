//! Rolling-origin evaluation on the bundled cyclone fixture: yearly
//! windows of ten years, advancing two years at a time.

use std::path::PathBuf;

use repquant::evaluation::{rolling_windows, WindowParams, WindowUnit};
use repquant::ingest::{load, CovariateColumn, DesignFlags, IngestSpec};
use repquant::{CovariateKind, TimeId, Transform};

fn main() -> repquant::Result<()> {
    let spec = IngestSpec {
        path: PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cyclone.csv"),
        time_column: "year".into(),
        response_column: "wind".into(),
        covariates: vec![CovariateColumn { name: "sst".into(), kind: CovariateKind::Continuous }],
        transform: Transform::Sqrt,
        design: DesignFlags { intercept: true, linear_trend: true, monthly_dummies: false },
        ..IngestSpec::default()
    };
    let (data, summary) = load(&spec, None)?;
    println!(
        "read {} years, dropped {} with too few replicates; columns {:?}",
        summary.groups_read,
        summary.dropped,
        data.names()
    );

    let plan = rolling_windows(
        data.times(),
        &WindowParams { anchor: TimeId::Index(1991), length: 10, step: 2, unit: WindowUnit::Index },
    )?;
    for (i, w) in plan.windows.iter().enumerate() {
        println!(
            "window {}: forecast {}..{} trained through {} ({} train / {} test points)",
            i + 1,
            w.forecast_start,
            w.forecast_end,
            w.train_end,
            w.train.len(),
            w.test.len()
        );
    }
    for s in &plan.skipped {
        println!("skipped: {}", s.reason);
    }
    Ok(())
}
