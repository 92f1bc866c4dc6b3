//! End-to-end reproduction of the worked examples against reference values.

use ceei_core::ceei::{ceei_menu, potential, potential_gradient, solve_ceei, CeeiOptions, CeeiSolution};
use ceei_core::certificate::{certify, CertifyOptions, Verdict};
use ceei_core::evaluator::{
    check_ratio_monotonicity, lottery_fixed_point, sample_ordered_pairs, simulate, unit_demand_slack, LotteryOptions,
    Menu,
};
use ceei_core::model::{RenormalizedModel, ValueModel};
use ceei_core::shadow::{shadow_costs, InterfaceScaling, ShadowOptions};
use ceei_core::simplex::GIntegrator;
use ceei_core::twogood::{
    optimize_z, two_option_optimality_condition, TwoGoodEvaluator, TwoGoodOptions, TwoGoodVerdict,
};
use serde::Serialize;

use crate::error::CliResult;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub label: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub reference: Option<f64>,
    pub tolerance: Option<f64>,
}

impl Check {
    fn near(label: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        Self {
            label: label.into(),
            passed: (value - reference).abs() <= tolerance,
            value: Some(value),
            reference: Some(reference),
            tolerance: Some(tolerance),
        }
    }

    fn at_most(label: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            label: label.into(),
            passed: value <= bound,
            value: Some(value),
            reference: None,
            tolerance: Some(bound),
        }
    }

    fn flag(label: impl Into<String>, passed: bool) -> Self {
        Self {
            label: label.into(),
            passed,
            value: None,
            reference: None,
            tolerance: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub samples: usize,
    pub seed: u64,
    pub passed: usize,
    pub failed: usize,
    pub rows: Vec<Row>,
}

fn uniform() -> RenormalizedModel {
    RenormalizedModel::new(ValueModel::uniform_square())
}

fn corner() -> RenormalizedModel {
    RenormalizedModel::new(ValueModel::corner_mass())
}

fn ceei(model: &RenormalizedModel, s: &[f64]) -> CliResult<CeeiSolution> {
    let gi = GIntegrator::quadrature(model)?;
    Ok(solve_ceei(&gi, s, &CeeiOptions::default())?)
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(a) * f(m) <= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    0.5 * (a + b)
}

/// Shadow costs on the uniform square with the indifference point at `t`.
fn uniform_costs(t: f64) -> [f64; 2] {
    let r2 = 2f64.sqrt();
    [
        ((2.0 - 2.0 * r2) * t * t + (4.0 + 6.0 * r2) * t - r2)
            / (3.0 * (1.0 - t) * ((7.0 + 5.0 * r2) * t - (1.0 + r2))),
        ((2.0 + 4.0 * r2) * t * t + (2.0 - 2.0 * r2) * t + (r2 - 1.0)) / (3.0 * t * ((3.0 + 2.0 * r2) * t - 1.0)),
    ]
}

/// Value per unit supply on the corner-mass model.
fn corner_r(z: f64) -> f64 {
    if z <= 5.0 / 9.0 {
        (1729.0 * z.powi(3) - 2929.0 * z * z + 1607.0 * z - 300.0)
            / (30.0 * (95.0 * z.powi(3) - 155.0 * z * z + 83.0 * z - 15.0))
    } else {
        2.0 * (19.0 * z.powi(3) + 347.0 * z * z - 31.0 * z + 25.0) / (15.0 * (38.0 * z.powi(3) + z * z + 4.0 * z + 5.0))
    }
}

fn quartic_root() -> f64 {
    bisect(
        |z| 4389.0 * z.powi(4) - 836.0 * z.powi(3) + 382.0 * z * z - 1140.0 * z + 85.0,
        0.5,
        1.0,
    )
}

fn clearing(_: usize, _: u64) -> CliResult<Vec<Check>> {
    let m = uniform();
    let sym = ceei(&m, &[0.1, 0.1])?;
    let asym = ceei(&m, &[0.1, 0.3])?;
    Ok(vec![
        Check::near("symmetric q_1", sym.q[0], 0.2, 1e-3),
        Check::near("symmetric q_2", sym.q[1], 0.2, 1e-3),
        Check::at_most("symmetric clearing residual", sym.clearing_residual, 1e-3),
        Check::near("asymmetric q_1", asym.q[0], 0.3, 1e-3),
        Check::near("asymmetric q_2", asym.q[1], 0.45, 1e-3),
        Check::near("asymmetric indifference point", asym.theta0.coords()[0], 0.6, 1e-3),
    ])
}

fn costs(samples: usize, seed: u64) -> CliResult<Vec<Check>> {
    let m = uniform();
    let quad = GIntegrator::quadrature(&m)?;
    let mc = GIntegrator::monte_carlo(&m, samples, seed)?;
    let embedded = ShadowOptions {
        scaling: InterfaceScaling::Embedded,
        ..ShadowOptions::default()
    };
    let mut out = Vec::new();
    let r = shadow_costs(&m, &quad, &[0.2, 0.2], &ShadowOptions::default())?;
    let rm = shadow_costs(&m, &mc, &[0.2, 0.2], &ShadowOptions::default())?;
    for i in 0..2 {
        out.push(Check::near(
            format!("symmetric c_{} quadrature", i + 1),
            r.c[i],
            2.0 / 3.0,
            1e-6,
        ));
        out.push(Check::near(
            format!("symmetric c_{} sampled", i + 1),
            rm.c[i],
            2.0 / 3.0,
            0.01 * 2.0 / 3.0,
        ));
    }
    for t0 in [0.6, 0.75] {
        let q = [1.0 - t0, t0];
        let reference = uniform_costs(t0);
        let r = shadow_costs(&m, &quad, &q, &embedded)?;
        let rm = shadow_costs(&m, &mc, &q, &embedded)?;
        for (i, &c) in reference.iter().enumerate() {
            out.push(Check::near(format!("t0={t0} c_{} quadrature", i + 1), r.c[i], c, 1e-6));
            out.push(Check::near(
                format!("t0={t0} c_{} sampled", i + 1),
                rm.c[i],
                c,
                0.01 * c,
            ));
        }
    }
    Ok(out)
}

fn balance(_: usize, _: u64) -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    for (name, m) in [("uniform_square", uniform()), ("corner_mass", corner())] {
        let rep = certify(&m, &[0.1, 0.1], &CertifyOptions::default())?;
        for t in &rep.tails {
            out.push(Check::at_most(
                format!("{name} good {} balance / total variation", t.good + 1),
                t.balance_residual.abs() / t.total_variation,
                1e-6,
            ));
        }
    }
    Ok(out)
}

fn verdicts(_: usize, _: u64) -> CliResult<Vec<Check>> {
    let u = certify(&uniform(), &[0.1, 0.1], &CertifyOptions::default())?;
    let c = certify(&corner(), &[0.1, 0.1], &CertifyOptions::default())?;
    let costs = u.shadow_costs.clone().unwrap_or_default();
    Ok(vec![
        Check::flag(
            "uniform_square certified_optimal",
            u.verdict == Verdict::CertifiedOptimal,
        ),
        Check {
            label: "uniform_square min tail mass".into(),
            passed: u.min_tail_mass.is_some_and(|x| x >= -1e-12),
            value: u.min_tail_mass,
            reference: Some(0.0),
            tolerance: Some(1e-12),
        },
        Check::flag(
            "uniform_square costs at least 1/3",
            costs.len() == 2 && costs.iter().all(|&x| x >= 1.0 / 3.0),
        ),
        Check::flag("corner_mass certificate_fails", c.verdict == Verdict::CertificateFails),
    ])
}

fn optimizer(_: usize, _: u64) -> CliResult<Vec<Check>> {
    let s = 0.1;
    let u = optimize_z(&uniform(), &[s, s], &TwoGoodOptions::default())?;
    let c = optimize_z(&corner(), &[s, s], &TwoGoodOptions::default())?;
    let q_low = c.menu.bundle(0)[0];
    let total: f64 = c.menu.bundles().last().map(|b| b.iter().sum()).unwrap_or(0.0);
    Ok(vec![
        Check::flag(
            "uniform_square two_option_optimal",
            u.verdict == TwoGoodVerdict::TwoOptionOptimal,
        ),
        Check::flag(
            "uniform_square menu quantities 2s",
            u.menu.len() == 2
                && u.menu
                    .bundles()
                    .iter()
                    .all(|b| (b.iter().sum::<f64>() - 2.0 * s).abs() < 1e-12),
        ),
        Check::flag(
            "corner_mass three_option_optimal",
            c.verdict == TwoGoodVerdict::ThreeOptionOptimal,
        ),
        Check::near("corner_mass z*", c.z_star, quartic_root(), 1e-3),
        Check::flag(
            "corner_mass q_L < 2s < mixed bundle total",
            q_low < 2.0 * s && 2.0 * s < total,
        ),
    ])
}

fn r_curve(samples: usize, seed: u64) -> CliResult<Vec<Check>> {
    let m = corner();
    let quad = TwoGoodEvaluator::quadrature(&m)?;
    let mc = TwoGoodEvaluator::monte_carlo(&m, samples, seed)?;
    let (mut sup_quad, mut sup_mc) = (0.0f64, 0.0f64);
    for i in 0..201 {
        let z = 0.5 + 0.5 * i as f64 / 200.0;
        sup_quad = sup_quad.max((quad.r_value(z)? - corner_r(z)).abs());
        sup_mc = sup_mc.max((mc.r_value(z)? - corner_r(z)).abs());
    }
    Ok(vec![
        Check::at_most("sup |r - reference| quadrature", sup_quad, 1e-3),
        Check::at_most("sup |r - reference| sampled", sup_mc, 1e-2),
        Check::near("r(0.75)", quad.r_value(0.75)?, 1.1111, 1e-3),
    ])
}

fn welfare(samples: usize, seed: u64) -> CliResult<Vec<Check>> {
    let s = 0.1;
    let (u, c) = (uniform(), corner());
    let menu = ceei_menu(&ceei(&u, &[s, s])?);
    let rep = simulate(&u, &menu, samples, seed, Some(&[s, s]))?;
    let w = rep.welfare_v_space;
    let mut out = vec![Check::near(
        "uniform_square CEEI welfare",
        w.value,
        4.0 * s / 3.0,
        3.0 * w.std_error,
    )];
    let three = optimize_z(&c, &[s, s], &TwoGoodOptions::default())?.menu;
    let two = Menu::new(vec![vec![2.0 * s, 0.0], vec![0.0, 2.0 * s]])?;
    let cases = [
        ("uniform_square ceei menu", &u, menu),
        ("corner_mass three-option menu", &c, three),
        ("corner_mass two-option menu", &c, two),
    ];
    for (name, model, menu) in cases {
        let rep = simulate(model, &menu, samples, seed, None)?;
        out.push(Check::at_most(
            format!("{name} welfare estimators gap in SE"),
            rep.welfare_gap_in_se.unwrap_or(f64::INFINITY),
            3.0,
        ));
    }
    Ok(out)
}

fn lottery(_: usize, _: u64) -> CliResult<Vec<Check>> {
    let m = uniform();
    let gi = GIntegrator::quadrature(&m)?;
    let mut out = Vec::new();
    for s in [[0.1, 0.1], [0.1, 0.3]] {
        let sol = solve_ceei(&gi, &s, &CeeiOptions::default())?;
        let lot = lottery_fixed_point(&gi, &s, &LotteryOptions::default())?;
        let err = sol.q.iter().zip(&lot.q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        out.push(Check::at_most(format!("s={s:?} |lottery q - CEEI q|"), err, 1e-3));
    }
    Ok(out)
}

fn properties(_: usize, seed: u64) -> CliResult<Vec<Check>> {
    let (u, c) = (uniform(), corner());
    let mut worst = 0.0f64;
    for model in [&u, &c] {
        let gi = GIntegrator::quadrature(model)?;
        for k in 0..20 {
            // a deterministic spread of supplies and log-prices
            let a = k as f64 / 20.0;
            let s = [0.05 + 0.4 * a, 0.45 - 0.35 * a];
            let y: Vec<f64> = (0..2)
                .map(|i| (1.0 / (2.0 * s[i])).ln() + 0.6 * ((k * (i + 3)) as f64).sin())
                .collect();
            let grad = potential_gradient(&gi, &s, &y)?;
            let h = 1e-5;
            for i in 0..2 {
                let (mut yp, mut ym) = (y.clone(), y.clone());
                yp[i] += h;
                ym[i] -= h;
                let (fp, ep) = potential(&gi, &s, &yp)?;
                let (fm, em) = potential(&gi, &s, &ym)?;
                let tol = 1e-6 + (ep + em) / h;
                worst = worst.max(((fp - fm) / (2.0 * h) - grad[i]).abs() / tol);
            }
        }
    }
    let menus = [
        ceei_menu(&ceei(&u, &[0.1, 0.1])?),
        ceei_menu(&ceei(&u, &[0.1, 0.3])?),
        optimize_z(&c, &[0.1, 0.1], &TwoGoodOptions::default())?.menu,
    ];
    let pairs = sample_ordered_pairs(2, 10_000, seed);
    let violations: usize = menus
        .iter()
        .map(|m| check_ratio_monotonicity(m, &pairs, 1e-9).len())
        .sum();
    let cond = two_option_optimality_condition(&u, 0.005, 2001, 1e-9)?;
    Ok(vec![
        Check::at_most("potential gradient error / tolerance", worst, 1.0),
        Check::at_most("ratio-monotonicity violations", violations as f64, 0.0),
        Check::flag("uniform_square two-option condition holds", cond.holds),
        Check::flag(
            "uniform_square monotone sufficient condition fails",
            !cond.monotone_sufficient_holds,
        ),
    ])
}

fn slackness(_: usize, _: u64) -> CliResult<Vec<Check>> {
    let m = uniform();
    let mut out = Vec::new();
    for base in [[1.0, 1.0], [1.0, 3.0]] {
        for eta in [0.05, 0.01] {
            let s = [eta * base[0], eta * base[1]];
            let slack = unit_demand_slack(&ceei_menu(&ceei(&m, &s)?));
            out.push(Check::at_most(
                format!("s={s:?} max bundle total"),
                slack.max_bundle_total,
                1.0 - 1e-12,
            ));
        }
    }
    Ok(out)
}

type RowFn = fn(usize, u64) -> CliResult<Vec<Check>>;

pub fn run(samples: usize, seed: u64) -> Summary {
    let rows: [(&str, RowFn); 10] = [
        ("CEEI clearing on the uniform square", clearing),
        ("shadow costs", costs),
        ("measure balance", balance),
        ("certificate verdicts", verdicts),
        ("two-good optimizer", optimizer),
        ("r-curve reproduction", r_curve),
        ("welfare", welfare),
        ("lottery game fixed point", lottery),
        ("property suites", properties),
        ("unit-demand slackness", slackness),
    ];
    let rows: Vec<Row> = rows
        .into_iter()
        .enumerate()
        .map(|(k, (name, f))| {
            let checks = f(samples, seed).unwrap_or_else(|e| vec![Check::flag(format!("error: {e}"), false)]);
            Row {
                id: k + 1,
                name: name.into(),
                passed: checks.iter().all(|c| c.passed),
                checks,
            }
        })
        .collect();
    let passed = rows.iter().filter(|r| r.passed).count();
    Summary {
        samples,
        seed,
        passed,
        failed: rows.len() - passed,
        rows,
    }
}
