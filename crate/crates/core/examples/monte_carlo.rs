//! A small Monte-Carlo study written to stdout as CSV.

use repquant::simulation::{run_experiment, DgpConfig, DgpKind, Method};
use repquant::TauGrid;

fn main() -> repquant::Result<()> {
    let taus = TauGrid::new(vec![0.5, 0.9])?;
    let methods = [Method::Kb, Method::Js, Method::Np, Method::NpJackknife];
    for kind in DgpKind::ALL {
        let config = DgpConfig::new(kind, 100, 100, 2024);
        let report = run_experiment(&config, &methods, &taus, 20, 0.8)?;
        eprintln!("{}:", kind.name());
        report.write_csv(std::io::stdout().lock())?;
    }
    Ok(())
}
