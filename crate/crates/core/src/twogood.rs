//! The symmetric two-good design problem.
//!
//! Menus of the form `{q_L e_1, q_L e_2, (z q_L, z q_L)}` with
//! `q_L = s / zeta(z)` exhaust supply `s` of each good, where
//! `zeta(z) = z - (2z - 1) P[theta_2 >= z]`. Their welfare per unit of supply
//! is `r(z) = (z E[sum V] + 2 E[(V_2 - z sum V)_+]) / zeta(z)`, and the best
//! menu maximizes `r` over `[1/2, 1]`; `z = 1/2` is the two-option menu.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::Menu;
use crate::model::RenormalizedModel;
use crate::numeric::{gl64, golden_section_max, MeanVar, NeumaierSum};
use crate::simplex::IntegrationMode;

fn check_z(z: f64) -> Result<()> {
    if !(0.5..=1.0).contains(&z) {
        return Err(Error::Domain(format!("z = {z} lies outside [1/2, 1]")));
    }
    Ok(())
}

fn check_symmetric_model(model: &RenormalizedModel) -> Result<()> {
    if model.n_goods() != 2 {
        return Err(Error::NotApplicable("the two-good problem needs N = 2".into()));
    }
    if !model.base().is_exchangeable() {
        return Err(Error::NotApplicable(
            "the two-good problem needs an exchangeable model".into(),
        ));
    }
    Ok(())
}

/// Draws sorted by `theta_2` with suffix sums, so every `z` reuses them.
#[derive(Debug, Clone)]
struct SortedDraws {
    theta2: Vec<f64>,
    total: Vec<f64>,
    // suffix sums over indices >= k of total and theta_2 * total
    suffix_total: Vec<f64>,
    suffix_weighted: Vec<f64>,
    mean_total: f64,
}

impl SortedDraws {
    fn new(model: &RenormalizedModel, n: usize, seed: u64) -> Self {
        let samples = model.base().sample_values(n, seed);
        let mut pairs: Vec<(f64, f64)> = samples
            .iter()
            .map(|v| {
                let tot = v[0] + v[1];
                (if tot > 0.0 { v[1] / tot } else { 0.0 }, tot)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let len = pairs.len();
        let mut suffix_total = vec![0.0; len + 1];
        let mut suffix_weighted = vec![0.0; len + 1];
        let (mut st, mut sw) = (NeumaierSum::default(), NeumaierSum::default());
        for k in (0..len).rev() {
            st.add(pairs[k].1);
            sw.add(pairs[k].0 * pairs[k].1);
            suffix_total[k] = st.value();
            suffix_weighted[k] = sw.value();
        }
        Self {
            mean_total: suffix_total[0] / len as f64,
            theta2: pairs.iter().map(|p| p.0).collect(),
            total: pairs.iter().map(|p| p.1).collect(),
            suffix_total,
            suffix_weighted,
        }
    }

    fn first_at_least(&self, z: f64) -> usize {
        self.theta2.partition_point(|&x| x < z)
    }
}

/// Evaluates `zeta` and `r` by interval quadrature or on one shared sample.
#[derive(Debug, Clone)]
pub struct TwoGoodEvaluator {
    model: RenormalizedModel,
    draws: Option<SortedDraws>,
    expected_total: f64,
}

impl TwoGoodEvaluator {
    pub fn quadrature(model: &RenormalizedModel) -> Result<Self> {
        check_symmetric_model(model)?;
        Ok(Self {
            model: model.clone(),
            draws: None,
            expected_total: model.base().expected_total_value().value,
        })
    }

    /// Common random numbers: one sample set serves every `z`.
    pub fn monte_carlo(model: &RenormalizedModel, n: usize, seed: u64) -> Result<Self> {
        check_symmetric_model(model)?;
        if n < 2 {
            return Err(Error::Config(
                "Monte Carlo evaluation needs at least two samples".into(),
            ));
        }
        let draws = SortedDraws::new(model, n, seed);
        Ok(Self {
            model: model.clone(),
            expected_total: draws.mean_total,
            draws: Some(draws),
        })
    }

    pub fn is_sampled(&self) -> bool {
        self.draws.is_some()
    }

    /// `(P[theta_2 >= z], E[(V_2 - z sum V)_+])`.
    fn upper_integrals(&self, z: f64) -> (f64, f64) {
        match &self.draws {
            Some(d) => {
                let n = d.theta2.len() as f64;
                let k = d.first_at_least(z);
                let count = d.theta2.len() - k;
                (count as f64 / n, (d.suffix_weighted[k] - z * d.suffix_total[k]) / n)
            }
            None => {
                let breaks = self.model.t_breaks();
                let upper = 1.0 - z;
                let p = gl64().integrate_split(0.0, upper, &breaks, |t| self.model.g_t(t));
                let e = gl64().integrate_split(0.0, upper, &breaks, |t| (1.0 - t - z) * self.model.lambda_g_t(t));
                (p, e)
            }
        }
    }

    pub fn zeta(&self, z: f64) -> Result<f64> {
        check_z(z)?;
        let (p, _) = self.upper_integrals(z);
        Ok(z - (2.0 * z - 1.0) * p)
    }

    pub fn r_value(&self, z: f64) -> Result<f64> {
        Ok(self.curve_point(z)?.r)
    }

    pub fn curve_point(&self, z: f64) -> Result<CurvePoint> {
        check_z(z)?;
        let (p, e) = self.upper_integrals(z);
        let zeta = z - (2.0 * z - 1.0) * p;
        if !(zeta > 0.0) {
            return Err(Error::Domain(format!("zeta({z}) = {zeta} is not positive")));
        }
        Ok(CurvePoint {
            z,
            zeta,
            r: (z * self.expected_total + 2.0 * e) / zeta,
        })
    }

    /// Delta-method standard error of `r(z_a) - r(z_b)` on the shared sample
    /// (zero for quadrature).
    pub fn difference_std_error(&self, z_a: f64, z_b: f64) -> Result<f64> {
        let Some(d) = &self.draws else {
            return Ok(0.0);
        };
        let (pa, pb) = (self.curve_point(z_a)?, self.curve_point(z_b)?);
        let influence = |z: f64, p: &CurvePoint, theta2: f64, total: f64| {
            let above = theta2 >= z;
            let num = z * total + 2.0 * if above { (theta2 - z) * total } else { 0.0 };
            let den = z - (2.0 * z - 1.0) * f64::from(u8::from(above));
            (num - p.r * den) / p.zeta
        };
        let mut mv = MeanVar::default();
        for (t2, tot) in d.theta2.iter().zip(&d.total) {
            mv.push(influence(z_a, &pa, *t2, *tot) - influence(z_b, &pb, *t2, *tot));
        }
        Ok(mv.std_error())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub z: f64,
    pub zeta: f64,
    pub r: f64,
}

/// `zeta(z)` by quadrature.
pub fn zeta(model: &RenormalizedModel, z: f64) -> Result<f64> {
    TwoGoodEvaluator::quadrature(model)?.zeta(z)
}

/// `r(z)` by quadrature.
pub fn r_value(model: &RenormalizedModel, z: f64) -> Result<f64> {
    TwoGoodEvaluator::quadrature(model)?.r_value(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoGoodVerdict {
    TwoOptionOptimal,
    ThreeOptionOptimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGoodOptions {
    pub mode: IntegrationMode,
    pub samples: usize,
    pub seed: u64,
    pub z_grid_size: usize,
    pub refine_width: f64,
    /// Tolerance on `r(z*) - r(1/2)` for the quadrature path; the sampled
    /// path uses three standard errors of that difference.
    pub quadrature_tol: f64,
}

impl Default for TwoGoodOptions {
    fn default() -> Self {
        Self {
            mode: IntegrationMode::Auto,
            samples: 1_000_000,
            seed: 0,
            z_grid_size: 2001,
            refine_width: 1e-6,
            quadrature_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGoodSolution {
    pub verdict: TwoGoodVerdict,
    /// `1/2` for the two-option verdict, otherwise the maximizer of `r`.
    pub z_star: f64,
    pub zeta_star: f64,
    pub r_star: f64,
    /// Best point found above `1/2`, whatever the verdict.
    pub z_interior: f64,
    pub r_interior: f64,
    pub r_half: f64,
    /// Tolerance used to compare `r(z_interior)` with `r(1/2)`.
    pub stat_tol: f64,
    pub menu: Menu,
    /// The three-option menu at `z_interior` when the verdict keeps two options.
    pub alternative_menu: Option<Menu>,
    /// Grid intervals whose `r` lies within `stat_tol` of the maximum.
    pub near_maximizers: Vec<(f64, f64)>,
    pub r_curve: Vec<CurvePoint>,
    pub refinement_log: Vec<(f64, f64)>,
    pub sampled: bool,
}

fn three_option_menu(s: f64, z: f64, zeta: f64) -> Menu {
    let q_low = s / zeta;
    Menu::with_labels(
        vec![vec![q_low, 0.0], vec![0.0, q_low], vec![z * q_low, z * q_low]],
        vec!["good_1".into(), "good_2".into(), "mixed".into()],
    )
    .expect("quantities are positive")
}

fn two_option_menu(s: f64) -> Menu {
    Menu::with_labels(
        vec![vec![2.0 * s, 0.0], vec![0.0, 2.0 * s]],
        vec!["good_1".into(), "good_2".into()],
    )
    .expect("quantities are positive")
}

/// Grid search on `[1/2, 1]` followed by golden-section refinement.
pub fn optimize_z(model: &RenormalizedModel, s: &[f64], opts: &TwoGoodOptions) -> Result<TwoGoodSolution> {
    check_symmetric_model(model)?;
    crate::ceei::validate_supplies(s, 2)?;
    if (s[0] - s[1]).abs() > 1e-12 * s[0].max(s[1]) {
        return Err(Error::NotApplicable(
            "the two-good problem needs symmetric supplies".into(),
        ));
    }
    if opts.z_grid_size < 2 {
        return Err(Error::Config("z grid needs at least two points".into()));
    }
    let eval = match opts.mode {
        IntegrationMode::MonteCarlo => TwoGoodEvaluator::monte_carlo(model, opts.samples, opts.seed)?,
        _ => TwoGoodEvaluator::quadrature(model)?,
    };
    let n = opts.z_grid_size;
    let grid: Vec<f64> = (0..n).map(|k| 0.5 + 0.5 * k as f64 / (n - 1) as f64).collect();
    let curve = grid.iter().map(|&z| eval.curve_point(z)).collect::<Result<Vec<_>>>()?;
    let k = (1..n)
        .max_by(|&a, &b| curve[a].r.partial_cmp(&curve[b].r).unwrap())
        .expect("grid has interior points");
    let lo = grid[k - 1].max(0.5 + 1e-9);
    let hi = grid[(k + 1).min(n - 1)].min(1.0 - 1e-9);
    let (z_ref, r_ref, log) = golden_section_max(
        |z| eval.r_value(z).unwrap_or(f64::NEG_INFINITY),
        lo,
        hi,
        opts.refine_width,
    );
    let (z_interior, r_interior) = if r_ref >= curve[k].r {
        (z_ref, r_ref)
    } else {
        (grid[k], curve[k].r)
    };
    let r_half = curve[0].r;
    let stat_tol = if eval.is_sampled() {
        3.0 * eval.difference_std_error(z_interior, 0.5)?
    } else {
        opts.quadrature_tol
    };
    let r_max = r_interior.max(r_half);
    let mut near_maximizers: Vec<(f64, f64)> = Vec::new();
    for p in &curve {
        if p.r >= r_max - stat_tol {
            match near_maximizers.last_mut() {
                Some(run) if (p.z - run.1) <= 1.5 * 0.5 / (n - 1) as f64 => run.1 = p.z,
                _ => near_maximizers.push((p.z, p.z)),
            }
        }
    }
    let zeta_interior = eval.zeta(z_interior)?;
    let two_option = r_interior - r_half <= stat_tol;
    let (verdict, z_star, zeta_star, r_star, menu, alternative_menu) = if two_option {
        (
            TwoGoodVerdict::TwoOptionOptimal,
            0.5,
            0.5,
            r_half,
            two_option_menu(s[0]),
            (z_interior > 0.5 + 1e-6).then(|| three_option_menu(s[0], z_interior, zeta_interior)),
        )
    } else {
        (
            TwoGoodVerdict::ThreeOptionOptimal,
            z_interior,
            zeta_interior,
            r_interior,
            three_option_menu(s[0], z_interior, zeta_interior),
            None,
        )
    };
    Ok(TwoGoodSolution {
        verdict,
        z_star,
        zeta_star,
        r_star,
        z_interior,
        r_interior,
        r_half,
        stat_tol,
        menu,
        alternative_menu,
        near_maximizers,
        r_curve: curve,
        refinement_log: log,
        sampled: eval.is_sampled(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionPoint {
    pub k: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoOptionCondition {
    /// `E[min - k max | min/max >= k] <= E[max] (1 - k)` on every tested `k`.
    pub holds: bool,
    pub max_violation: f64,
    pub max_violation_at: f64,
    pub points: Vec<ConditionPoint>,
    /// Values of `k` skipped because the conditioning event is empty or trivial.
    pub vacuous: Vec<f64>,
    /// `E[V_1 + V_2 | min/max = r]` is non-increasing in `r` (sufficient).
    pub monotone_sufficient_holds: bool,
    pub monotone_max_increase: f64,
}

/// Checks the two-option optimality condition on `k = 0, k_step, ..., 1`.
pub fn two_option_optimality_condition(
    model: &RenormalizedModel,
    k_step: f64,
    ratio_grid_size: usize,
    tol: f64,
) -> Result<TwoOptionCondition> {
    check_symmetric_model(model)?;
    if !(k_step > 0.0 && k_step <= 1.0) {
        return Err(Error::Config("k step must lie in (0, 1]".into()));
    }
    let breaks = model.t_breaks();
    let rule = gl64();
    let e_max = rule.integrate_split(0.0, 1.0, &breaks, |t| t.max(1.0 - t) * model.lambda_g_t(t));
    let steps = (1.0 / k_step).round() as usize;
    let mut points = Vec::new();
    let mut vacuous = Vec::new();
    let mut worst = (f64::NEG_INFINITY, 0.0);
    for i in 0..=steps {
        let k = (i as f64 * k_step).min(1.0);
        let (a, b) = (k / (1.0 + k), 1.0 / (1.0 + k));
        let mut cuts = breaks.clone();
        cuts.push(0.5);
        let p = rule.integrate_split(a, b, &cuts, |t| model.g_t(t));
        if b - a <= 1e-12 || p <= 1e-14 {
            vacuous.push(k);
            continue;
        }
        let num = rule.integrate_split(a, b, &cuts, |t| {
            (t.min(1.0 - t) - k * t.max(1.0 - t)) * model.lambda_g_t(t)
        });
        let lhs = num / p;
        let rhs = e_max * (1.0 - k);
        if lhs - rhs > worst.0 {
            worst = (lhs - rhs, k);
        }
        points.push(ConditionPoint { k, lhs, rhs });
    }
    // E[sum V | ratio = r]: both orientations t = r/(1+r) and 1/(1+r) share a Jacobian
    let m = ratio_grid_size.max(2);
    let mut prev: Option<f64> = None;
    let mut max_increase = f64::NEG_INFINITY;
    for j in 0..m {
        let r = (j as f64 + 0.5) / m as f64;
        let (t1, t2) = (r / (1.0 + r), 1.0 / (1.0 + r));
        let den = model.g_t(t1) + model.g_t(t2);
        if den <= 0.0 {
            continue;
        }
        let v = (model.lambda_g_t(t1) + model.lambda_g_t(t2)) / den;
        if let Some(p) = prev {
            max_increase = max_increase.max(v - p);
        }
        prev = Some(v);
    }
    Ok(TwoOptionCondition {
        holds: worst.0 <= tol,
        max_violation: worst.0,
        max_violation_at: worst.1,
        points,
        vacuous,
        monotone_sufficient_holds: max_increase <= tol,
        monotone_max_increase: max_increase,
    })
}
