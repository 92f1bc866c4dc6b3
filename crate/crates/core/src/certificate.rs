//! Optimality certificates for the clearing menu.
//!
//! For two goods each region carries a signed measure `mu_i` (an interior
//! density plus one vertex atom). The clearing menu is optimal when every
//! tail of `mu_1` toward `t = 1` and every tail of `mu_2` toward `t = 0` has
//! nonnegative mass. For i.i.d. goods in any dimension a sufficient
//! condition is that `x f(x) / F(x)` is non-increasing.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ceei::{solve_ceei, validate_supplies, CeeiOptions};
use crate::error::{Error, Result};
use crate::model::{Marginal, RenormalizedModel};
use crate::numeric::{gl16, golden_section_max, pieces, NeumaierSum};
use crate::shadow::{shadow_costs, InterfaceScaling, ShadowOptions};
use crate::simplex::GIntegrator;

type Density = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A signed measure on an interval of `t = theta_1`: a density plus atoms.
#[derive(Clone)]
pub struct SignedMeasure1D {
    /// 0 for the region of good 1 (`[t0, 1]`), 1 for good 2 (`[0, t0]`).
    pub good: usize,
    pub domain: (f64, f64),
    density: Density,
    pub atoms: Vec<(f64, f64)>,
    /// Kinks of the density inside the domain.
    pub breaks: Vec<f64>,
}

impl fmt::Debug for SignedMeasure1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SignedMeasure1D")
            .field("good", &self.good)
            .field("domain", &self.domain)
            .field("atoms", &self.atoms)
            .field("breaks", &self.breaks)
            .finish_non_exhaustive()
    }
}

impl SignedMeasure1D {
    pub fn new(
        good: usize,
        domain: (f64, f64),
        density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        atoms: Vec<(f64, f64)>,
        breaks: Vec<f64>,
    ) -> Self {
        let breaks = breaks.into_iter().filter(|&b| b > domain.0 && b < domain.1).collect();
        Self {
            good,
            domain,
            density: Arc::new(density),
            atoms,
            breaks,
        }
    }

    pub fn zero(good: usize, domain: (f64, f64)) -> Self {
        Self::new(good, domain, |_| 0.0, Vec::new(), Vec::new())
    }

    pub fn density(&self, t: f64) -> f64 {
        (self.density)(t)
    }

    /// The same measure multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let inner = Arc::clone(&self.density);
        Self {
            good: self.good,
            domain: self.domain,
            density: Arc::new(move |t| k * inner(t)),
            atoms: self.atoms.iter().map(|&(x, w)| (x, k * w)).collect(),
            breaks: self.breaks.clone(),
        }
    }

    pub fn without_atoms(&self) -> Self {
        Self {
            atoms: Vec::new(),
            ..self.clone()
        }
    }

    /// Mass of `[a, b]`, atoms included.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = (a.max(self.domain.0), b.min(self.domain.1));
        let mut acc = NeumaierSum::default();
        if hi > lo {
            for (p, q) in pieces(lo, hi, &self.breaks) {
                acc.add(crate::numeric::gl64().integrate(p, q, |t| self.density(t)));
            }
        }
        for &(x, w) in &self.atoms {
            if x >= a && x <= b {
                acc.add(w);
            }
        }
        acc.value()
    }

    /// `mu(domain)`.
    pub fn total(&self) -> f64 {
        self.interval_mass(self.domain.0, self.domain.1)
    }

    /// Mass of the upper set at `a`: `[a, 1]` for good 1, `[0, a]` for good 2.
    pub fn tail(&self, a: f64) -> f64 {
        if self.good == 0 {
            self.interval_mass(a, self.domain.1)
        } else {
            self.interval_mass(self.domain.0, a)
        }
    }

    pub fn total_variation(&self) -> f64 {
        let mut acc = NeumaierSum::default();
        for (p, q) in self.grid_pieces(400) {
            for (t, w) in gl16().mapped(p, q) {
                acc.add(w * self.density(t).abs());
            }
        }
        for &(_, w) in &self.atoms {
            acc.add(w.abs());
        }
        acc.value()
    }

    /// Uniform grid of `n` intervals refined by the break points.
    fn grid_pieces(&self, n: usize) -> Vec<(f64, f64)> {
        let (lo, hi) = self.domain;
        let mut cuts: Vec<f64> = (1..n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
        cuts.extend(&self.breaks);
        pieces(lo, hi, &cuts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    CertifiedOptimal,
    CertificateFails,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateMethod {
    TwoGoodExact,
    IidSufficient,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    pub good: usize,
    pub balance_residual: f64,
    pub total_variation: f64,
    pub min_tail_mass: f64,
    pub min_tail_location: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub verdict: Verdict,
    pub method: CertificateMethod,
    /// Per-good tail summaries (two-good method).
    pub tails: Vec<TailSummary>,
    pub min_tail_mass: Option<f64>,
    /// `(good, a)` of the most negative tail.
    pub min_tail_location: Option<(usize, f64)>,
    pub shadow_costs: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    /// Largest increase of `x f(x) / F(x)` between grid neighbours (i.i.d. method).
    pub ratio_max_increase: Option<f64>,
    pub ratio_max_increase_at: Option<f64>,
    pub notes: Vec<String>,
}

impl CertificateReport {
    fn not_applicable(note: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::NotApplicable,
            method: CertificateMethod::None,
            tails: Vec::new(),
            min_tail_mass: None,
            min_tail_location: None,
            shadow_costs: None,
            q: None,
            ratio_max_increase: None,
            ratio_max_increase_at: None,
            notes: vec![note.into()],
        }
    }
}

/// The measures for two goods at affordable quantities `q` and costs `c`.
///
/// With `S = c_1 + c_2` and `h(t) = (c_1 - S t) g(t)`, both share the
/// bracket `lambda g + h' - S g`, weighted by `t` on `[t0, 1]` and by `1 - t`
/// on `[0, t0]`; the vertex atoms are `c_2 g(1)` and `c_1 g(0)`.
pub fn build_mu_two_goods(
    model: &RenormalizedModel,
    q: &[f64],
    c: &[f64],
) -> Result<(SignedMeasure1D, SignedMeasure1D)> {
    if model.n_goods() != 2 || q.len() != 2 || c.len() != 2 {
        return Err(Error::NotApplicable("signed measures are built for two goods".into()));
    }
    let t0 = q[1] / (q[0] + q[1]);
    let (c1, c2) = (c[0], c[1]);
    let s = c1 + c2;
    let bracket = {
        let m = model.clone();
        move |t: f64| {
            let (g, lg) = m.ray_moments(&[t, 1.0 - t]);
            lg - 2.0 * s * g + (c1 - s * t) * m.g_t_derivative(t)
        }
    };
    let mut breaks = model.t_breaks();
    breaks.push(t0);
    let b1 = bracket.clone();
    let mu1 = SignedMeasure1D::new(
        0,
        (t0, 1.0),
        move |t| t * b1(t),
        vec![(1.0, c2 * model.g_t(1.0))],
        breaks.clone(),
    );
    let mu2 = SignedMeasure1D::new(
        1,
        (0.0, t0),
        move |t| (1.0 - t) * bracket(t),
        vec![(0.0, c1 * model.g_t(0.0))],
        breaks,
    );
    Ok((mu1, mu2))
}

pub fn measure_balance(mu: &SignedMeasure1D) -> f64 {
    mu.total()
}

/// Tail masses on a grid of `grid_size` points plus the breaks, with golden
/// refinement around the most negative value. Returns `(min, location)`.
fn min_tail(mu: &SignedMeasure1D, grid_size: usize) -> (f64, f64) {
    let (lo, hi) = mu.domain;
    if hi <= lo {
        return (mu.tail(lo), lo);
    }
    let n = grid_size.max(2) - 1;
    let mut pts: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    pts.extend(&mu.breaks);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let piece = |a: f64, b: f64| -> f64 {
        pieces(a, b, &mu.breaks)
            .into_iter()
            .map(|(p, q)| gl16().integrate(p, q, |t| mu.density(t)))
            .sum()
    };
    let atoms_in = |a: f64, b: f64| -> f64 {
        mu.atoms
            .iter()
            .filter(|(x, _)| *x >= a && *x <= b)
            .map(|(_, w)| w)
            .sum()
    };
    // cumulative masses from the outer end of the upper sets
    let mut tails = vec![0.0; pts.len()];
    let mut acc = NeumaierSum::default();
    if mu.good == 0 {
        tails[pts.len() - 1] = atoms_in(hi, hi);
        for k in (0..pts.len() - 1).rev() {
            acc.add(piece(pts[k], pts[k + 1]));
            tails[k] = acc.value() + atoms_in(pts[k], hi);
        }
    } else {
        tails[0] = atoms_in(lo, lo);
        for k in 1..pts.len() {
            acc.add(piece(pts[k - 1], pts[k]));
            tails[k] = acc.value() + atoms_in(lo, pts[k]);
        }
    }
    let (k, &v) = tails
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .expect("grid is nonempty");
    let mut best = (v, pts[k]);
    let (a, b) = (pts[k.saturating_sub(1)], pts[(k + 1).min(pts.len() - 1)]);
    if b > a {
        let (x, neg, _) = golden_section_max(|t| -mu.tail(t), a, b, 1e-9 * (hi - lo));
        if -neg < best.0 {
            best = (-neg, x);
        }
    }
    best
}

/// Exact two-good check: every tail of both measures must be nonnegative up
/// to `rel_tol` times the measure's total variation.
pub fn dominance_check_two_goods(
    mu1: &SignedMeasure1D,
    mu2: &SignedMeasure1D,
    grid_size: usize,
    rel_tol: f64,
) -> CertificateReport {
    let mut tails = Vec::new();
    let mut ok = true;
    for mu in [mu1, mu2] {
        let tv = mu.total_variation();
        let balance = measure_balance(mu);
        let (min, at) = min_tail(mu, grid_size);
        ok &= min >= -rel_tol * tv && balance.abs() <= rel_tol * tv.max(f64::MIN_POSITIVE);
        tails.push(TailSummary {
            good: mu.good,
            balance_residual: balance,
            total_variation: tv,
            min_tail_mass: min,
            min_tail_location: at,
        });
    }
    let worst = tails
        .iter()
        .min_by(|a, b| a.min_tail_mass.partial_cmp(&b.min_tail_mass).unwrap())
        .expect("two measures");
    CertificateReport {
        verdict: if ok {
            Verdict::CertifiedOptimal
        } else {
            Verdict::CertificateFails
        },
        method: CertificateMethod::TwoGoodExact,
        min_tail_mass: Some(worst.min_tail_mass),
        min_tail_location: Some((worst.good, worst.min_tail_location)),
        tails,
        shadow_costs: None,
        q: None,
        ratio_max_increase: None,
        ratio_max_increase_at: None,
        notes: vec!["vertex atoms are fixed by the balance identity: c_2 g(1) and c_1 g(0)".into()],
    }
}

/// Checks that `x f(x) / F(x)` is non-increasing on a grid of `(0, upper]`.
pub fn iid_ratio_condition(marginal: &Marginal, grid_size: usize, tol: f64) -> CertificateReport {
    let upper = marginal.upper();
    let n = grid_size.max(2);
    let ratio = |x: f64| x * marginal.pdf(x) / marginal.cdf(x);
    let mut prev = marginal.ratio_limit_at_zero();
    let mut worst = (f64::NEG_INFINITY, 0.0);
    for k in 1..=n {
        // stay inside the support where the pdf is defined
        let x = upper * k as f64 / n as f64 * (1.0 - 1e-12);
        let r = ratio(x);
        let rise = r - prev;
        if rise > worst.0 {
            worst = (rise, x);
        }
        prev = r;
    }
    let pass = worst.0 <= tol * prev.abs().max(1.0);
    CertificateReport {
        verdict: if pass {
            Verdict::CertifiedOptimal
        } else {
            Verdict::CertificateFails
        },
        method: CertificateMethod::IidSufficient,
        tails: Vec::new(),
        min_tail_mass: None,
        min_tail_location: None,
        shadow_costs: None,
        q: None,
        ratio_max_increase: Some(worst.0),
        ratio_max_increase_at: Some(worst.1),
        notes: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub tail_grid_size: usize,
    /// Relative tolerance on tails and balance (times total variation).
    pub rel_tol: f64,
    pub ratio_grid_size: usize,
    pub ceei: CeeiOptions,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            tail_grid_size: 2001,
            rel_tol: 1e-6,
            ratio_grid_size: 2001,
            ceei: CeeiOptions::default(),
        }
    }
}

/// Clears the market, prices supply, and runs whichever check applies.
///
/// Two goods always use interval quadrature so the balance identity holds
/// to quadrature accuracy.
pub fn certify(model: &RenormalizedModel, s: &[f64], opts: &CertifyOptions) -> Result<CertificateReport> {
    let n = model.n_goods();
    validate_supplies(s, n)?;
    if n == 2 {
        let gi = GIntegrator::quadrature(model)?;
        let sol = solve_ceei(&gi, s, &opts.ceei)?;
        let shadow = shadow_costs(
            model,
            &gi,
            &sol.q,
            &ShadowOptions {
                scaling: InterfaceScaling::Intrinsic,
                ..ShadowOptions::default()
            },
        )?;
        let (mu1, mu2) = build_mu_two_goods(model, &sol.q, &shadow.c)?;
        let mut report = dominance_check_two_goods(&mu1, &mu2, opts.tail_grid_size, opts.rel_tol);
        report.shadow_costs = Some(shadow.c);
        report.q = Some(sol.q);
        return Ok(report);
    }
    let symmetric = s.iter().all(|&x| (x - s[0]).abs() <= 1e-12 * s[0]);
    match model.base().marginal() {
        Some(marginal) if symmetric => Ok(iid_ratio_condition(&marginal, opts.ratio_grid_size, 1e-9)),
        Some(_) => Ok(CertificateReport::not_applicable(
            "the i.i.d. sufficient condition needs symmetric supplies",
        )),
        None => Ok(CertificateReport::not_applicable(
            "no exact certificate for N ≥ 3 and the model is not i.i.d.",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ValueModel;
    use crate::shadow::ShadowOptions;

    fn uniform() -> RenormalizedModel {
        RenormalizedModel::new(ValueModel::uniform_square())
    }

    #[test]
    fn symmetric_uniform_measures() {
        let m = uniform();
        let (mu1, mu2) = build_mu_two_goods(&m, &[0.2, 0.2], &[2.0 / 3.0, 2.0 / 3.0]).unwrap();
        for t in [0.5, 0.6, 0.8, 0.99] {
            assert!((mu1.density(t) + 1.0 / (3.0 * t * t)).abs() < 1e-12, "t={t}");
        }
        assert_eq!(mu1.atoms, vec![(1.0, 1.0 / 3.0)]);
        assert!(measure_balance(&mu1).abs() < 1e-12);
        assert!(measure_balance(&mu2).abs() < 1e-12);
        assert!((mu1.tail(0.8) - 0.25).abs() < 1e-12);
        assert!(measure_balance(&mu1.without_atoms()) < 0.0);
    }

    #[test]
    fn interior_density_matches_uniform_closed_form_off_symmetry() {
        let m = uniform();
        let gi = GIntegrator::quadrature(&m).unwrap();
        let q = [0.25, 0.75];
        let r = shadow_costs(&m, &gi, &q, &ShadowOptions::default()).unwrap();
        let (mu1, mu2) = build_mu_two_goods(&m, &q, &r.c).unwrap();
        for k in 0..50 {
            let t = 0.75 + 0.25 * (k as f64 + 0.5) / 50.0;
            let exact = t * (1.0 / 3.0 - r.c[0]) / t.powi(3);
            assert!((mu1.density(t) - exact).abs() < 1e-6);
        }
        for k in 0..50 {
            let t = 0.75 * (k as f64 + 0.5) / 50.0;
            let exact = if t <= 0.5 {
                (1.0 - t) * (1.0 / 3.0 - r.c[1]) / (1.0 - t).powi(3)
            } else {
                (1.0 - t) * (1.0 / 3.0 - r.c[0]) / t.powi(3)
            };
            assert!((mu2.density(t) - exact).abs() < 1e-6, "t={t}");
        }
        assert!(measure_balance(&mu1).abs() < 1e-10 && measure_balance(&mu2).abs() < 1e-10);
    }

    #[test]
    fn uniform_is_certified_and_corner_mass_fails() {
        let r = certify(&uniform(), &[0.1, 0.1], &CertifyOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::CertifiedOptimal);
        let r = certify(&uniform(), &[0.1, 0.3], &CertifyOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::CertifiedOptimal);
        assert!(r.shadow_costs.unwrap().iter().all(|&c| c >= 1.0 / 3.0));
        let corner = RenormalizedModel::new(ValueModel::corner_mass());
        let r = certify(&corner, &[0.1, 0.1], &CertifyOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::CertificateFails);
        assert!(r
            .tails
            .iter()
            .all(|t| t.balance_residual.abs() <= 1e-6 * t.total_variation));
        assert!(r.min_tail_mass.unwrap() < -0.01);
    }

    #[test]
    fn zero_measure_is_certified() {
        let r = dominance_check_two_goods(
            &SignedMeasure1D::zero(0, (0.5, 1.0)),
            &SignedMeasure1D::zero(1, (0.0, 0.5)),
            101,
            1e-6,
        );
        assert_eq!(r.verdict, Verdict::CertifiedOptimal);
    }

    #[test]
    fn rescaling_keeps_the_verdict() {
        let corner = RenormalizedModel::new(ValueModel::corner_mass());
        let gi = GIntegrator::quadrature(&corner).unwrap();
        let r = shadow_costs(&corner, &gi, &[0.2, 0.2], &ShadowOptions::default()).unwrap();
        let (mu1, mu2) = build_mu_two_goods(&corner, &[0.2, 0.2], &r.c).unwrap();
        let base = dominance_check_two_goods(&mu1, &mu2, 2001, 1e-6).verdict;
        for k in [0.01, 7.0] {
            let v = dominance_check_two_goods(&mu1.scaled(k), &mu2.scaled(k), 2001, 1e-6).verdict;
            assert_eq!(v, base);
        }
    }

    #[test]
    fn ratio_condition_examples() {
        let v = |m: Marginal| iid_ratio_condition(&m, 2001, 1e-9).verdict;
        assert_eq!(v(Marginal::Uniform { upper: 1.0 }), Verdict::CertifiedOptimal);
        assert_eq!(v(Marginal::Power { exponent: 2.0 }), Verdict::CertifiedOptimal);
        assert_eq!(v(Marginal::Exponential { rate: 1.0 }), Verdict::CertificateFails);
    }

    #[test]
    fn ratio_condition_implies_two_good_certificate() {
        for marginal in [Marginal::Uniform { upper: 1.0 }, Marginal::Power { exponent: 2.0 }] {
            let model = RenormalizedModel::new(ValueModel::iid(2, marginal.clone()).unwrap());
            assert_eq!(
                iid_ratio_condition(&marginal, 2001, 1e-9).verdict,
                Verdict::CertifiedOptimal
            );
            for s in [[0.1, 0.1], [0.2, 0.2]] {
                let r = certify(&model, &s, &CertifyOptions::default()).unwrap();
                assert_eq!(r.verdict, Verdict::CertifiedOptimal, "{marginal:?} {s:?} {r:?}");
            }
        }
    }

    #[test]
    fn three_goods_use_the_sufficient_condition() {
        let m = RenormalizedModel::new(ValueModel::iid(3, Marginal::Uniform { upper: 1.0 }).unwrap());
        let r = certify(&m, &[0.1; 3], &CertifyOptions::default()).unwrap();
        assert_eq!(
            (r.verdict, r.method),
            (Verdict::CertifiedOptimal, CertificateMethod::IidSufficient)
        );
        let r = certify(&m, &[0.1, 0.2, 0.1], &CertifyOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::NotApplicable);
    }
}
