//! Per-time sample quantiles of a small replicated series.

use repquant::{check_loss, quantile_series, sample_quantile, CovariateKind, ReplicatedSeries, TimeId};

fn main() -> repquant::Result<()> {
    let values = [3.1, -0.4, 2.2, 7.5, 0.9, 1.6, 4.0, 2.8, -1.3, 5.2];
    for tau in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let q = sample_quantile(&values, tau)?;
        let loss: f64 = values.iter().map(|y| check_loss(y - q, tau).unwrap()).sum();
        println!("tau={tau:<4}  Q={q:>5.2}  pooled check loss={loss:.3}");
    }

    let data = ReplicatedSeries::new(
        (1..=3).map(TimeId::Index).collect(),
        vec![vec![0.0], vec![1.0], vec![2.0]],
        vec![vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 4.0, 6.0], vec![5.0; 5]],
        vec![CovariateKind::Continuous],
        vec!["x".into()],
    )?;
    let q = quantile_series(&data, 0.5)?;
    println!("medians by time: {:?}", q.values);
    Ok(())
}
