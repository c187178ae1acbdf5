//! Nadaraya-Watson and jackknife estimates with 95% intervals on one
//! simulated data set, compared against the true conditional quantile.

use repquant::np::NpEstimate;
use repquant::simulation::{simulate, true_quantile, DgpConfig, DgpKind};
use repquant::{NpConfig, NpModel};

fn main() -> repquant::Result<()> {
    let config = DgpConfig::new(DgpKind::Nlqrm, 400, 200, 11);
    let data = simulate(&config, 0);
    let tau = 0.9;
    let model = NpModel::fit(&data, tau, &NpConfig::default())?;
    println!("bandwidth {:.4} on {} time points", model.bandwidth(), model.len());
    println!("{:>6} {:>9} {:>9} {:>9} {:>21}", "x", "truth", "nw", "jk", "95% interval");
    for x in [-1.5, -0.75, 0.0, 0.75, 1.5] {
        let query = [1.0, x];
        let nw = model.predict(&query, NpEstimate::NadarayaWatson)?;
        let ci = model.confidence_interval(&query, 0.05)?;
        println!(
            "{x:>6.2} {:>9.4} {nw:>9.4} {:>9.4}   [{:>8.4}, {:>8.4}]",
            true_quantile(&config, x, tau),
            ci.point,
            ci.lower,
            ci.upper
        );
    }
    Ok(())
}
