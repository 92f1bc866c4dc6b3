use ceei_core::ceei::{ceei_menu, solve_ceei, CeeiOptions};
use ceei_core::evaluator::{best_response, simulate};
use ceei_core::model::{renormalize, Marginal, RenormalizedModel, ValueModel};
use ceei_core::numeric::gl64;
use ceei_core::simplex::GIntegrator;
use ceei_core::twogood::{optimize_z, TwoGoodOptions};

fn corner() -> RenormalizedModel {
    RenormalizedModel::new(ValueModel::corner_mass())
}

#[test]
fn pushforward_matches_density() {
    for model in [RenormalizedModel::new(ValueModel::uniform_square()), corner()] {
        let n = 1_000_000;
        let bins = 50;
        let mut counts = vec![0usize; bins];
        for v in model.base().sample_values(n, 2).iter() {
            let t = renormalize(v).unwrap().coords()[0];
            counts[((t * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let breaks = model.t_breaks();
        let mut chi2 = 0.0;
        for (k, &c) in counts.iter().enumerate() {
            let (a, b) = (k as f64 / bins as f64, (k + 1) as f64 / bins as f64);
            let expected = n as f64 * gl64().integrate_split(a, b, &breaks, |t| model.g_t(t));
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        let dof = (bins - 1) as f64;
        assert!(chi2 < dof + 6.0 * (2.0 * dof).sqrt(), "chi2 = {chi2}");
    }
}

#[test]
fn tower_property() {
    for model in [
        RenormalizedModel::new(ValueModel::uniform_square()),
        corner(),
        RenormalizedModel::new(ValueModel::iid(2, Marginal::Exponential { rate: 2.0 }).unwrap()),
    ] {
        let breaks = model.t_breaks();
        let integral = gl64().integrate_split(0.0, 1.0, &breaks, |t| model.lambda_g_t(t));
        let mc = model.base().expected_total_value_mc(1_000_000, 4);
        assert!(
            (integral - mc.value).abs() <= 3.0 * mc.std_error,
            "{} vs {} +- {}",
            integral,
            mc.value,
            mc.std_error
        );
    }
}

#[test]
fn equilibrium_does_not_depend_on_start() {
    let model = corner();
    let gi = GIntegrator::quadrature(&model).unwrap();
    let s = [0.15, 0.05];
    let reference = solve_ceei(&gi, &s, &CeeiOptions::default()).unwrap().q;
    for start in [[-2.0, 3.0], [1.5, 1.5], [4.0, -1.0]] {
        let opts = CeeiOptions {
            initial_y: Some(start.to_vec()),
            ..CeeiOptions::default()
        };
        let q = solve_ceei(&gi, &s, &opts).unwrap().q;
        for (a, b) in q.iter().zip(&reference) {
            assert!((a / b - 1.0).abs() < 1e-6, "{q:?} vs {reference:?}");
        }
    }
}

#[test]
fn simulated_demand_clears_the_market() {
    let cases = [
        (RenormalizedModel::new(ValueModel::uniform_square()), vec![0.1, 0.3]),
        (corner(), vec![0.2, 0.1]),
        (
            RenormalizedModel::new(ValueModel::iid(3, Marginal::Uniform { upper: 1.0 }).unwrap()),
            vec![0.1, 0.2, 0.3],
        ),
    ];
    for (model, s) in cases {
        let gi = GIntegrator::new(&model, ceei_core::simplex::IntegrationMode::Auto, 200_000, 1).unwrap();
        let sol = solve_ceei(&gi, &s, &CeeiOptions::default()).unwrap();
        let rep = simulate(&model, &ceei_menu(&sol), 1_000_000, 8, Some(&s)).unwrap();
        for (d, si) in rep.demand.iter().zip(&s) {
            // quadrature clears exactly; N = 3 is clearing on a quasi-random set
            let tol = 3.0 * d.std_error
                + if sol.backend == "polygon_quadrature" {
                    0.0
                } else {
                    1e-3 * si
                };
            assert!((d.value - si).abs() <= tol + 1e-9, "demand {} vs supply {si}", d.value);
        }
        let gap = rep.welfare_gap_in_se.unwrap();
        assert!(gap <= 3.0, "welfare estimators differ by {gap} SE");
    }
}

#[test]
fn three_option_menu_exhausts_supply() {
    let s = 0.1;
    let sol = optimize_z(&corner(), &[s, s], &TwoGoodOptions::default()).unwrap();
    let rep = simulate(&corner(), &sol.menu, 1_000_000, 12, Some(&[s, s])).unwrap();
    for d in &rep.demand {
        assert!(
            (d.value - s).abs() <= 3.0 * d.std_error,
            "{} +- {}",
            d.value,
            d.std_error
        );
    }
}

#[test]
fn allocation_gap_is_a_single_step() {
    let sol = optimize_z(&corner(), &[0.1, 0.1], &TwoGoodOptions::default()).unwrap();
    let q_low = sol.menu.bundle(0)[0];
    for v in corner().base().sample_values(100_000, 6).iter() {
        let theta = renormalize(v).unwrap();
        let t = theta.coords()[1];
        if t < 0.5 || (t - sol.z_star).abs() < 1e-9 {
            continue;
        }
        let x = sol.menu.bundle(best_response(theta.coords(), &sol.menu));
        let gap = x[1] - x[0];
        let expected = if t >= sol.z_star { q_low } else { 0.0 };
        assert!((gap - expected).abs() < 1e-12, "t={t}: gap {gap}");
    }
}
