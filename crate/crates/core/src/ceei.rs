//! Market-clearing prices for equal token budgets.
//!
//! The clearing log-prices minimize the convex potential
//! `Psi(y) = ∫ max_j (log theta_j - y_j) dG + sum_j s_j exp(y_j)`,
//! whose gradient is `-m_i(y) + s_i exp(y_i)` with `m_i` the mass of types
//! buying good `i` at prices `exp(y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::Menu;
use crate::model::{renormalize, SimplexPoint};
use crate::numeric::{max_abs, Lu};
use crate::simplex::GIntegrator;

pub use crate::simplex::region_of;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeeiOptions {
    /// Gradient tolerance; defaults to 1e-8 for quadrature and 1e-4 for point sets.
    pub tol_grad: Option<f64>,
    /// Relative clearing tolerance `max_i |q_i m_i - s_i| / s_i`.
    pub tol_clear: f64,
    pub max_iters: usize,
    /// Starting log-prices; defaults to `log(1 / (N s_i))`.
    pub initial_y: Option<Vec<f64>>,
}

impl Default for CeeiOptions {
    fn default() -> Self {
        Self {
            tol_grad: None,
            tol_clear: 1e-3,
            max_iters: 200,
            initial_y: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeeiSolution {
    pub supplies: Vec<f64>,
    /// Log-prices.
    pub y: Vec<f64>,
    pub p: Vec<f64>,
    /// Affordable quantities `1 / p`.
    pub q: Vec<f64>,
    pub theta0: SimplexPoint,
    pub region_masses: Vec<f64>,
    pub clearing_residual: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub integration_error_estimate: f64,
    pub backend: String,
}

pub fn validate_supplies(s: &[f64], n_goods: usize) -> Result<()> {
    if s.len() != n_goods {
        return Err(Error::Config(format!("expected {n_goods} supplies, got {}", s.len())));
    }
    if s.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Domain("supplies must be strictly positive".into()));
    }
    Ok(())
}

fn quantities(y: &[f64]) -> Vec<f64> {
    y.iter().map(|v| (-v).exp()).collect()
}

struct Evaluation {
    value: f64,
    gradient: Vec<f64>,
    masses: Vec<f64>,
    error: f64,
}

fn evaluate(gi: &GIntegrator, s: &[f64], y: &[f64]) -> Evaluation {
    let q = quantities(y);
    let out = gi.integrate_by_region(&q, 2, |r, theta, _, buf| {
        buf[0] = (theta[r] * q[r]).ln();
        buf[1] = 1.0;
    });
    let supply_term: f64 = s.iter().zip(y).map(|(si, yi)| si * yi.exp()).sum();
    let masses = out[1].values.clone();
    let gradient = masses
        .iter()
        .zip(s.iter().zip(y))
        .map(|(m, (si, yi))| -m + si * yi.exp())
        .collect();
    Evaluation {
        value: out[0].total() + supply_term,
        gradient,
        masses,
        error: out[0].errors.iter().sum::<f64>() + out[1].max_error(),
    }
}

/// `Psi(y)` and an estimate of its integration error.
pub fn potential(gi: &GIntegrator, s: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    validate_supplies(s, gi.n_goods())?;
    let e = evaluate(gi, s, y);
    Ok((e.value, e.error))
}

pub fn potential_gradient(gi: &GIntegrator, s: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    validate_supplies(s, gi.n_goods())?;
    Ok(evaluate(gi, s, y).gradient)
}

fn default_tol_grad(gi: &GIntegrator) -> f64 {
    if gi.points().is_some() {
        1e-4
    } else {
        1e-8
    }
}

fn hessian(gi: &GIntegrator, s: &[f64], y: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = y.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut up = y.to_vec();
        let mut dn = y.to_vec();
        up[j] += h;
        dn[j] -= h;
        let gu = evaluate(gi, s, &up).gradient;
        let gd = evaluate(gi, s, &dn).gradient;
        cols.push(gu.iter().zip(&gd).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (cols[j][i] + cols[i][j])).collect())
        .collect()
}

/// Minimizes `Psi` by damped Newton with a finite-difference Hessian and an
/// Armijo line search, stepping along the negative gradient whenever the
/// Newton direction is unusable.
pub fn solve_ceei(gi: &GIntegrator, s: &[f64], opts: &CeeiOptions) -> Result<CeeiSolution> {
    let n = gi.n_goods();
    validate_supplies(s, n)?;
    let tol_grad = opts.tol_grad.unwrap_or_else(|| default_tol_grad(gi));
    // point sets give a piecewise-constant gradient, so difference over many points
    let h = if gi.points().is_some() { 1e-2 } else { 1e-5 };
    let mut y = match &opts.initial_y {
        Some(y0) if y0.len() == n => y0.clone(),
        Some(_) => return Err(Error::Config("initial log-prices have wrong dimension".into())),
        None => s.iter().map(|si| (1.0 / (n as f64 * si)).ln()).collect(),
    };
    let mut current = evaluate(gi, s, &y);
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let gnorm = max_abs(&current.gradient);
        if gnorm <= tol_grad {
            break;
        }
        iterations += 1;
        let grad = current.gradient.clone();
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let newton = Lu::factor(&hessian(gi, s, &y, h)).ok().and_then(|lu| {
            let d = lu.solve(&neg);
            let descent: f64 = d.iter().zip(&grad).map(|(a, b)| a * b).sum();
            (descent < 0.0 && d.iter().all(|x| x.is_finite())).then_some(d)
        });
        let mut direction = newton.unwrap_or(neg);
        let size = max_abs(&direction);
        if size > 2.0 {
            direction.iter_mut().for_each(|d| *d *= 2.0 / size);
        }
        let slope: f64 = direction.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = y.iter().zip(&direction).map(|(a, d)| a + step * d).collect();
            let e = evaluate(gi, s, &trial);
            if e.value <= current.value + 1e-4 * step * slope {
                accepted = Some((trial, e));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, e)) => {
                y = trial;
                current = e;
            }
            // no decrease at any step length: Psi is flat to working precision
            None => break,
        }
    }
    let q = quantities(&y);
    let gradient_norm = max_abs(&current.gradient);
    let clearing_residual = q
        .iter()
        .zip(&current.masses)
        .zip(s)
        .map(|((qi, mi), si)| (qi * mi - si).abs() / si)
        .fold(0.0, f64::max);
    if gradient_norm > tol_grad || clearing_residual > opts.tol_clear {
        return Err(Error::NonConvergence {
            what: "market clearing".into(),
            iterations,
            residual: gradient_norm.max(clearing_residual),
            best: y,
        });
    }
    let inv_q: Vec<f64> = q.iter().map(|x| 1.0 / x).collect();
    Ok(CeeiSolution {
        supplies: s.to_vec(),
        p: y.iter().map(|v| v.exp()).collect(),
        theta0: renormalize(&inv_q)?,
        y,
        q,
        region_masses: current.masses,
        clearing_residual,
        iterations,
        gradient_norm,
        integration_error_estimate: current.error,
        backend: gi.backend_name().into(),
    })
}

/// Pure-option menu `{q_i e_i}`.
pub fn ceei_menu(sol: &CeeiSolution) -> Menu {
    let n = sol.q.len();
    let bundles = (0..n)
        .map(|i| {
            let mut b = vec![0.0; n];
            b[i] = sol.q[i];
            b
        })
        .collect();
    Menu::new(bundles).expect("affordable quantities are positive")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Marginal, RenormalizedModel, ValueModel};
    use crate::simplex::PointSet;
    use proptest::prelude::*;

    fn quad(model: ValueModel) -> GIntegrator {
        GIntegrator::quadrature(&RenormalizedModel::new(model)).unwrap()
    }

    #[test]
    fn potential_of_point_mass() {
        let gi = GIntegrator::from_points(PointSet::point_mass(vec![0.5, 0.5], 1.0).unwrap());
        let (v, _) = potential(&gi, &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!((v - (0.5f64.ln() + 2.0)).abs() < 1e-15);
        assert!((v - 1.3069).abs() < 1e-4);
    }

    #[test]
    fn potential_of_uniform_square_at_origin() {
        let gi = quad(ValueModel::uniform_square());
        let (v, err) = potential(&gi, &[0.1, 0.1], &[0.0, 0.0]).unwrap();
        assert!((v - (1.0 + 2.0 * 0.5f64.ln() + 0.2)).abs() < 1e-12);
        assert!((v + 0.1863).abs() < 1e-4);
        assert!(err < 1e-10);
    }

    #[test]
    fn gradient_vanishes_at_known_equilibria() {
        let gi = quad(ValueModel::uniform_square());
        let g = potential_gradient(&gi, &[0.1, 0.1], &[5f64.ln(), 5f64.ln()]).unwrap();
        assert!(max_abs(&g) < 1e-12);
        let g = potential_gradient(&gi, &[0.1, 0.3], &[(10.0f64 / 3.0).ln(), (20.0f64 / 9.0).ln()]).unwrap();
        assert!(max_abs(&g) < 1e-12, "{g:?}");
    }

    #[test]
    fn solves_symmetric_and_asymmetric_uniform() {
        let gi = quad(ValueModel::uniform_square());
        let sol = solve_ceei(&gi, &[0.1, 0.1], &CeeiOptions::default()).unwrap();
        assert!((sol.q[0] - 0.2).abs() < 1e-9 && (sol.q[1] - 0.2).abs() < 1e-9);
        assert!((sol.theta0.coords()[0] - 0.5).abs() < 1e-9);
        let sol = solve_ceei(&gi, &[0.1, 0.3], &CeeiOptions::default()).unwrap();
        assert!((sol.q[0] - 0.3).abs() < 1e-8, "{:?}", sol.q);
        assert!((sol.q[1] - 0.45).abs() < 1e-8);
        assert!((sol.theta0.coords()[0] - 0.6).abs() < 1e-8);
        assert!((sol.region_masses[0] - 1.0 / 3.0).abs() < 1e-8);
        assert!(sol.clearing_residual < 1e-6);
    }

    #[test]
    fn symmetric_exchangeable_three_goods() {
        let gi = quad(ValueModel::iid(3, Marginal::Uniform { upper: 1.0 }).unwrap());
        let sol = solve_ceei(&gi, &[0.1, 0.1, 0.1], &CeeiOptions::default()).unwrap();
        for i in 0..3 {
            assert!((sol.q[i] - 0.3).abs() < 1e-8);
            assert!((sol.theta0.coords()[i] - 1.0 / 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn monte_carlo_path_converges() {
        let m = RenormalizedModel::new(ValueModel::uniform_square());
        let gi = GIntegrator::monte_carlo(&m, 100_000, 11).unwrap();
        let sol = solve_ceei(&gi, &[0.1, 0.3], &CeeiOptions::default()).unwrap();
        assert!(
            (sol.q[0] - 0.3).abs() < 3e-3 && (sol.q[1] - 0.45).abs() < 3e-3,
            "{:?}",
            sol.q
        );
    }

    #[test]
    fn rejects_bad_supplies() {
        let gi = quad(ValueModel::uniform_square());
        match solve_ceei(&gi, &[-1.0, 0.1], &CeeiOptions::default()) {
            Err(Error::Domain(m)) => assert_eq!(m, "supplies must be strictly positive"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_convergence_carries_best_iterate() {
        let gi = quad(ValueModel::uniform_square());
        let opts = CeeiOptions {
            max_iters: 0,
            initial_y: Some(vec![3.0, -3.0]),
            ..CeeiOptions::default()
        };
        match solve_ceei(&gi, &[0.1, 0.3], &opts) {
            Err(Error::NonConvergence { best, .. }) => assert_eq!(best, vec![3.0, -3.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn menu_has_pure_bundles() {
        let gi = quad(ValueModel::uniform_square());
        let sol = solve_ceei(&gi, &[0.1, 0.3], &CeeiOptions::default()).unwrap();
        let menu = ceei_menu(&sol);
        assert_eq!(menu.len(), 2);
        assert_eq!(menu.bundle(0)[1], 0.0);
        assert!((menu.bundle(1)[1] - 0.45).abs() < 1e-8);
    }

    #[test]
    fn theta0_neighbourhoods_map_to_their_regions() {
        let gi = quad(ValueModel::uniform_square());
        let sol = solve_ceei(&gi, &[0.1, 0.3], &CeeiOptions::default()).unwrap();
        let t0 = sol.theta0.coords();
        for i in 0..2 {
            let mut t: Vec<f64> = t0.iter().map(|x| x * (1.0 - 1e-6)).collect();
            t[i] += 1e-6;
            assert_eq!(region_of(&t, &sol.q), i);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn potential_is_midpoint_convex(a in prop::array::uniform2(-1.0f64..3.0), b in prop::array::uniform2(-1.0f64..3.0)) {
            let gi = quad(ValueModel::corner_mass());
            let s = [0.1, 0.2];
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            let (pa, _) = potential(&gi, &s, &a).unwrap();
            let (pb, _) = potential(&gi, &s, &b).unwrap();
            let (pm, _) = potential(&gi, &s, &mid).unwrap();
            prop_assert!(pm <= (pa + pb) / 2.0 + 1e-10);
        }

        #[test]
        fn potential_symmetric_under_swap(y in prop::array::uniform2(-1.0f64..3.0), s in 0.05f64..0.5) {
            let gi = quad(ValueModel::corner_mass());
            let (p1, _) = potential(&gi, &[s, 2.0 * s], &y).unwrap();
            let (p2, _) = potential(&gi, &[2.0 * s, s], &[y[1], y[0]]).unwrap();
            prop_assert!((p1 - p2).abs() < 1e-10);
        }

        #[test]
        fn gradient_matches_central_differences(y in prop::array::uniform2(0.0f64..3.0)) {
            let gi = quad(ValueModel::uniform_square());
            let s = [0.1, 0.3];
            let g = potential_gradient(&gi, &s, &y).unwrap();
            let h = 1e-5;
            for i in 0..2 {
                let mut up = y;
                let mut dn = y;
                up[i] += h;
                dn[i] -= h;
                let fd = (potential(&gi, &s, &up).unwrap().0 - potential(&gi, &s, &dn).unwrap().0) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() < 1e-6, "{} vs {}", fd, g[i]);
            }
        }
    }
}
