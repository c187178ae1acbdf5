//! Jackknife quantile surface over two covariates, printed as a coarse
//! text contour.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use repquant::np::GridSpec;
use repquant::{CovariateKind, NpConfig, NpModel, ReplicatedSeries, TimeId};

fn main() -> repquant::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let n = 300;
    let mut cov = Vec::with_capacity(n);
    let mut reps = Vec::with_capacity(n);
    for _ in 0..n {
        let (u, v): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let center = (2.0 * u).sin() + v * v;
        reps.push((0..50).map(|_| center + rng.random_range(-0.5..0.5)).collect());
        cov.push(vec![u, v]);
    }
    let data = ReplicatedSeries::new(
        (0..n as i64).map(TimeId::Index).collect(),
        cov,
        reps,
        vec![CovariateKind::Continuous; 2],
        vec!["u".into(), "v".into()],
    )?;
    let model = NpModel::fit(&data, 0.75, &NpConfig::default())?;
    let grid = GridSpec { resolution_i: 12, resolution_j: 24, range_i: (-0.9, 0.9), range_j: (-0.9, 0.9) };
    let surface = model.grid_surface(0, 1, &grid, &[0.0, 0.0])?;

    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    let (lo, hi) = surface
        .cells
        .iter()
        .filter_map(|c| c.value)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    for row in surface.cells.chunks(grid.resolution_j) {
        let line: String = row
            .iter()
            .map(|c| match c.value {
                Some(v) => shades[(((v - lo) / (hi - lo)) * 9.0).round() as usize],
                None => '?',
            })
            .collect();
        println!("u={:>5.2} |{line}|", row[0].xi);
    }
    println!("range of the 0.75-quantile surface: [{lo:.3}, {hi:.3}]");
    Ok(())
}
