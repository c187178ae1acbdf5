//! Pooled linear quantile regression.
//!
//! The check loss is minimized in two phases. Iteratively reweighted least
//! squares on the majorizer `|r| <= r^2 / (2c) + c / 2`, with the smoothing
//! floor `c` halved from a tenth of the response scale down to `1e-10` of
//! it, brings `beta` close to the optimum. A vertex descent then finishes
//! exactly: the optimum of the piecewise-linear loss is attained where `d`
//! observations are fitted exactly, and from such a basis the loss is
//! decreased along edges of the arrangement until no edge descends.

use nalgebra::{DMatrix, DVector};

use super::{check_full_rank, LinearMethod, LinearQuantileFit};
use crate::error::{check_tau, Error, Result};
use crate::quantile::rho;
use crate::series::ReplicatedSeries;

/// `sum_t sum_j rho_tau(Y_tj - X_t' beta)`.
pub fn pooled_objective(data: &ReplicatedSeries, beta: &[f64], tau: f64) -> f64 {
    let mut total = 0.0;
    for (x, reps) in data.covariates().iter().zip(data.replicates()) {
        let fit: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
        total += reps.iter().map(|y| rho(y - fit, tau)).sum::<f64>();
    }
    total
}

struct Pooled<'a> {
    rows: Vec<&'a [f64]>,
    y: Vec<f64>,
    d: usize,
    tau: f64,
}

impl Pooled<'_> {
    fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.y)
            .map(|(x, y)| y - dot(x, beta))
            .collect()
    }

    fn objective(&self, beta: &[f64]) -> f64 {
        self.residuals(beta).iter().map(|&r| rho(r, self.tau)).sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits `beta` minimizing the pooled check loss.
pub fn fit_kb(data: &ReplicatedSeries, tau: f64) -> Result<LinearQuantileFit> {
    check_tau(tau)?;
    let d = data.dim();
    let n_obs = data.total_observations();
    if n_obs < d {
        return Err(Error::InsufficientData { needed: d, got: n_obs });
    }
    let mut distinct: Vec<Vec<f64>> = data.covariates().to_vec();
    distinct.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    distinct.dedup();
    check_full_rank(&distinct, d)?;

    let mut rows = Vec::with_capacity(n_obs);
    let mut y = Vec::with_capacity(n_obs);
    for (x, reps) in data.covariates().iter().zip(data.replicates()) {
        for &v in reps {
            rows.push(x.as_slice());
            y.push(v);
        }
    }
    let pooled = Pooled { rows, y, d, tau };
    let start = irls(&pooled)?;
    let beta = vertex_descent(&pooled, &start)?;
    let objective = pooled.objective(&beta);
    Ok(LinearQuantileFit {
        tau,
        beta,
        method: LinearMethod::Kb,
        objective,
        omega_diag: None,
        floored: vec![],
    })
}

fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<Vec<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(&b).iter().copied().collect());
    }
    a.lu()
        .solve(&b)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::SingularDesign("reweighted normal equations are singular".into()))
}

fn irls(p: &Pooled) -> Result<Vec<f64>> {
    let d = p.d;
    let n = p.y.len() as f64;
    let mean = p.y.iter().sum::<f64>() / n;
    let sd = (p.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if sd > 0.0 { sd } else { mean.abs().max(1.0) };

    let mut beta = vec![0.0; d];
    let mut eps = 0.1 * scale;
    let stop = 1e-10 * scale;
    while eps >= stop {
        for _ in 0..20 {
            let r = p.residuals(&beta);
            let mut a = DMatrix::<f64>::zeros(d, d);
            let mut b = DVector::<f64>::zeros(d);
            for ((x, &yi), &ri) in p.rows.iter().zip(&p.y).zip(&r) {
                let w = 0.5 / ri.abs().max(eps);
                let rhs = yi * w + (p.tau - 0.5);
                for i in 0..d {
                    b[i] += x[i] * rhs;
                    for j in 0..=i {
                        a[(i, j)] += w * x[i] * x[j];
                    }
                }
            }
            for i in 0..d {
                for j in 0..i {
                    a[(j, i)] = a[(i, j)];
                }
            }
            let next = solve_spd(a, b)?;
            let change = next
                .iter()
                .zip(&beta)
                .map(|(u, v)| (u - v).abs())
                .fold(0.0, f64::max);
            beta = next;
            if change <= 1e-3 * eps {
                break;
            }
        }
        eps *= 0.5;
    }
    Ok(beta)
}

/// Picks `d` linearly independent observations, smallest residuals first.
fn initial_basis(p: &Pooled, beta: &[f64]) -> Result<Vec<usize>> {
    let r = p.residuals(beta);
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by(|&i, &j| r[i].abs().total_cmp(&r[j].abs()).then(i.cmp(&j)));
    let mut basis = Vec::with_capacity(p.d);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(p.d);
    for i in order {
        let mut v = p.rows[i].to_vec();
        let norm0 = dot(&v, &v).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for q in &ortho {
            let c = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-9 * norm0 {
            v.iter_mut().for_each(|a| *a /= norm);
            ortho.push(v);
            basis.push(i);
            if basis.len() == p.d {
                return Ok(basis);
            }
        }
    }
    Err(Error::SingularDesign("observations do not span the design".into()))
}

fn basis_inverse(p: &Pooled, basis: &[usize]) -> Result<DMatrix<f64>> {
    let d = p.d;
    let xb = DMatrix::from_fn(d, d, |i, j| p.rows[basis[i]][j]);
    xb.try_inverse()
        .ok_or_else(|| Error::SingularDesign("degenerate vertex basis".into()))
}

/// Exact vertex descent on the piecewise-linear objective.
fn vertex_descent(p: &Pooled, start: &[f64]) -> Result<Vec<f64>> {
    let d = p.d;
    let tau = p.tau;
    let mut basis = initial_basis(p, start)?;
    let max_iter = 50 * p.y.len() + 1000;
    let mut best = start.to_vec();
    let mut best_obj = p.objective(start);

    for iteration in 0..max_iter {
        let inv = basis_inverse(p, &basis)?;
        let yb = DVector::from_fn(d, |i, _| p.y[basis[i]]);
        let beta: Vec<f64> = (&inv * yb).iter().copied().collect();
        let r = p.residuals(&beta);
        let obj: f64 = r.iter().map(|&v| rho(v, tau)).sum();
        if obj < best_obj {
            best_obj = obj;
            best = beta.clone();
        }
        let zero_tol = 1e-12 * (1.0 + r.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let in_basis = |i: usize| basis.contains(&i);

        // Bland's rule: take the first descending edge.
        let mut chosen = None;
        'edges: for k in 0..d {
            for s in [1.0, -1.0] {
                let delta: Vec<f64> = (0..d).map(|i| s * inv[(i, k)]).collect();
                let a: Vec<f64> = p.rows.iter().map(|x| dot(x, &delta)).collect();
                // Moving beta by t * delta changes residual i by -t * a_i;
                // the basis row k gets residual -t * s.
                let mut slope = if s > 0.0 { tau - 1.0 } else { tau };
                slope *= -s;
                let mut scale = 1.0;
                for (i, (&ai, &ri)) in a.iter().zip(&r).enumerate() {
                    if in_basis(i) || ai == 0.0 {
                        continue;
                    }
                    scale += ai.abs();
                    let v = -ai;
                    let positive = ri > zero_tol || (ri.abs() <= zero_tol && v > 0.0);
                    slope += if positive { v * tau } else { v * (tau - 1.0) };
                }
                if slope < -1e-12 * scale {
                    chosen = Some((k, slope, a));
                    break 'edges;
                }
            }
        }
        let Some((k, slope0, a)) = chosen else {
            return Ok(if best_obj < obj { best } else { beta });
        };

        // Line search over the breakpoints t_i = r_i / a_i > 0. Points with a
        // zero residual move away from zero along the edge and were counted
        // on their outgoing side above, so they contribute no kink.
        let mut breaks: Vec<(f64, usize)> = a
            .iter()
            .zip(&r)
            .enumerate()
            .filter(|&(i, (&ai, &ri))| !in_basis(i) && ai != 0.0 && ri.abs() > zero_tol)
            .filter_map(|(i, (&ai, &ri))| {
                let t = ri / ai;
                (t > 0.0).then_some((t, i))
            })
            .collect();
        breaks.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let mut slope = slope0;
        let mut entering = None;
        for &(_, i) in &breaks {
            slope += a[i].abs();
            if slope >= 0.0 {
                entering = Some(i);
                break;
            }
        }
        let Some(j) = entering else {
            return Err(Error::OptimizationFailure {
                message: "check loss unbounded along an edge".into(),
                iterations: iteration,
                best,
            });
        };
        basis[k] = j;
    }
    Err(Error::OptimizationFailure {
        message: "vertex descent iteration cap reached".into(),
        iterations: max_iter,
        best,
    })
}
