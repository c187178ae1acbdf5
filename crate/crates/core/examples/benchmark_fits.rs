//! Linear benchmarks versus the nonparametric fit on a curved quantile
//! function.

use repquant::evaluation::{evaluate_method, ordered_split, NpPredictor};
use repquant::np::NpEstimate;
use repquant::quantile_series;
use repquant::simulation::{simulate, DgpConfig, DgpKind};
use repquant::{fit_js, fit_kb, NpConfig, NpModel};

fn main() -> repquant::Result<()> {
    let config = DgpConfig::new(DgpKind::Gqrm, 100, 500, 3);
    let data = simulate(&config, 0);
    let tau = 0.9;
    let (train_idx, test_idx) = ordered_split(data.len(), 0.8)?;
    let train = data.select(&train_idx)?;
    let test = data.select(&test_idx)?;
    let targets = |s: &repquant::ReplicatedSeries| quantile_series(s, tau).map(|q| q.values);

    let kb = fit_kb(&train, tau)?;
    let js = fit_js(&train, tau)?;
    let np = NpModel::fit(&train, tau, &NpConfig::default())?;
    println!("kb beta = {:?}", kb.beta);
    println!("js beta = {:?}", js.beta);

    let np_pred = NpPredictor { model: &np, estimate: NpEstimate::NadarayaWatson };
    let (ttr, tte) = (targets(&train)?, targets(&test)?);
    let results = [
        ("kb", evaluate_method(&kb, train.covariates(), &ttr, test.covariates(), &tte)?),
        ("js", evaluate_method(&js, train.covariates(), &ttr, test.covariates(), &tte)?),
        ("np", evaluate_method(&np_pred, train.covariates(), &ttr, test.covariates(), &tte)?),
    ];
    for (name, r) in results {
        println!(
            "{name}: training RMSE {:.4}, prediction RMSE {:.4}",
            r.training_rmse, r.prediction_rmse
        );
    }
    Ok(())
}
