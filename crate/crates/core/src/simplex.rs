//! Integrals against `G` split by choice region.
//!
//! Given affordable quantities `q`, a type `theta` picks the good maximizing
//! `theta_i q_i`. Three backends integrate over the resulting regions: exact
//! interval quadrature for two goods, clipped-polygon quadrature for three,
//! and weighted point sets (Monte Carlo or an explicit discrete `G`) for any
//! dimension.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RenormalizedModel, Samples};
use crate::numeric::{gl16, gl32, gl64, gl8, pieces, GaussLegendre, NeumaierSum};
use crate::rng::CHUNK;

/// `argmax_j theta_j q_j`, lowest index on ties (0-based).
pub fn region_of(theta: &[f64], q: &[f64]) -> usize {
    let mut best = 0;
    let mut best_value = theta[0] * q[0];
    for (j, (t, qj)) in theta.iter().zip(q).enumerate().skip(1) {
        let v = t * qj;
        if v > best_value {
            best = j;
            best_value = v;
        }
    }
    best
}

/// The type indifferent among all pure options, `theta_i ∝ 1 / q_i`.
pub fn indifference_type(q: &[f64]) -> Vec<f64> {
    let total: f64 = q.iter().map(|x| 1.0 / x).sum();
    q.iter().map(|x| 1.0 / x / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMode {
    Quadrature,
    #[serde(rename = "mc")]
    MonteCarlo,
    #[default]
    Auto,
}

impl std::str::FromStr for IntegrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadrature" => Ok(Self::Quadrature),
            "mc" => Ok(Self::MonteCarlo),
            "auto" => Ok(Self::Auto),
            other => Err(Error::Config(format!("unknown integration mode {other:?}"))),
        }
    }
}

/// Weighted points on the simplex, each carrying a welfare weight.
///
/// Built from value samples the weight is the realized total `sum(v)`, whose
/// conditional mean given `theta` is `lambda(theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    n_goods: usize,
    theta: Vec<f64>,
    lambda: Vec<f64>,
    weight: Vec<f64>,
    sampled: bool,
}

impl PointSet {
    /// Equal-weight points from raw value draws (zero vectors are dropped).
    pub fn from_samples(samples: &Samples) -> Self {
        let n_goods = samples.n_goods();
        let mut theta = Vec::with_capacity(samples.as_flat().len());
        let mut lambda = Vec::with_capacity(samples.len());
        for v in samples.iter() {
            let total: f64 = v.iter().sum();
            if total > 0.0 {
                theta.extend(v.iter().map(|x| x / total));
                lambda.push(total);
            }
        }
        let n = lambda.len();
        Self {
            n_goods,
            theta,
            lambda,
            weight: vec![1.0 / n.max(1) as f64; n],
            sampled: true,
        }
    }

    /// A discrete `G` given as `(theta, lambda, weight)` triples; weights are normalized.
    pub fn weighted(points: &[(Vec<f64>, f64, f64)]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Config("a discrete distribution needs at least one point".into()))?;
        let n_goods = first.0.len();
        let total_weight: f64 = points.iter().map(|p| p.2).sum();
        if !(total_weight > 0.0) || points.iter().any(|p| p.2 < 0.0) {
            return Err(Error::Config(
                "point weights must be nonnegative with positive sum".into(),
            ));
        }
        let mut theta = Vec::with_capacity(points.len() * n_goods);
        for (t, _, _) in points {
            let p = crate::model::SimplexPoint::new(t.clone())?;
            if p.dim() != n_goods {
                return Err(Error::Config("points of differing dimension".into()));
            }
            theta.extend_from_slice(p.coords());
        }
        Ok(Self {
            n_goods,
            theta,
            lambda: points.iter().map(|p| p.1).collect(),
            weight: points.iter().map(|p| p.2 / total_weight).collect(),
            sampled: false,
        })
    }

    /// Unit point mass at `theta` with welfare weight `lambda`.
    pub fn point_mass(theta: Vec<f64>, lambda: f64) -> Result<Self> {
        Self::weighted(&[(theta, lambda, 1.0)])
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn n_goods(&self) -> usize {
        self.n_goods
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        &self.theta[i * self.n_goods..(i + 1) * self.n_goods]
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.lambda[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weight[i]
    }

    /// Whether the points are random draws (so sums carry sampling error).
    pub fn is_sampled(&self) -> bool {
        self.sampled
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Line(RenormalizedModel),
    Polygon(RenormalizedModel),
    Points(PointSet),
}

/// Per-region integrals with error estimates (quadrature rule difference or
/// one Monte Carlo standard error).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionIntegral {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
}

impl RegionIntegral {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().fold(0.0, |a, &b| a.max(b))
    }
}

/// Region masses `M_i = G(Γ_i)` and moments `A_i = ∫_{Γ_i} theta_i lambda dG`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceIntegrals {
    pub masses: Vec<f64>,
    pub moments: Vec<f64>,
    pub mass_errors: Vec<f64>,
    pub moment_errors: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GIntegrator {
    n_goods: usize,
    backend: Backend,
}

type Point2 = [f64; 2];

impl GIntegrator {
    /// Deterministic quadrature; available for two and three goods.
    pub fn quadrature(model: &RenormalizedModel) -> Result<Self> {
        let n_goods = model.n_goods();
        let backend = match n_goods {
            2 => Backend::Line(model.clone()),
            3 => Backend::Polygon(model.clone()),
            n => {
                return Err(Error::Unsupported(format!(
                    "simplex quadrature requires N ≤ 3 (got N = {n})"
                )))
            }
        };
        Ok(Self { n_goods, backend })
    }

    /// A fixed point set drawn once from `F` (quasi-random where supported).
    pub fn monte_carlo(model: &RenormalizedModel, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config(
                "Monte Carlo integration needs at least one sample".into(),
            ));
        }
        let samples = model.base().sample_quasi(n, seed);
        Ok(Self::from_points(PointSet::from_samples(&samples)))
    }

    pub fn from_points(points: PointSet) -> Self {
        Self {
            n_goods: points.n_goods(),
            backend: Backend::Points(points),
        }
    }

    /// Quadrature when it is accurate for the family, points otherwise.
    pub fn new(model: &RenormalizedModel, mode: IntegrationMode, n: usize, seed: u64) -> Result<Self> {
        match mode {
            IntegrationMode::Quadrature => Self::quadrature(model),
            IntegrationMode::MonteCarlo => Self::monte_carlo(model, n, seed),
            IntegrationMode::Auto => {
                let polygon_ok = !matches!(model.base().family(), crate::model::Family::CustomPiecewise { .. });
                match model.n_goods() {
                    2 => Self::quadrature(model),
                    3 if polygon_ok => Self::quadrature(model),
                    _ => Self::monte_carlo(model, n, seed),
                }
            }
        }
    }

    pub fn n_goods(&self) -> usize {
        self.n_goods
    }

    pub fn model(&self) -> Option<&RenormalizedModel> {
        match &self.backend {
            Backend::Line(m) | Backend::Polygon(m) => Some(m),
            Backend::Points(_) => None,
        }
    }

    pub fn points(&self) -> Option<&PointSet> {
        match &self.backend {
            Backend::Points(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_sampled(&self) -> bool {
        matches!(&self.backend, Backend::Points(p) if p.is_sampled())
    }

    /// Number of points for point backends; zero for quadrature.
    pub fn sample_count(&self) -> usize {
        self.points().map_or(0, PointSet::len)
    }

    pub fn backend_name(&self) -> &'static str {
        match &self.backend {
            Backend::Line(_) => "interval_quadrature",
            Backend::Polygon(_) => "polygon_quadrature",
            Backend::Points(p) if p.is_sampled() => "monte_carlo",
            Backend::Points(_) => "discrete",
        }
    }

    /// `∫_{Γ_r} f(r, theta, lambda) dG` for each region `r` and each of the
    /// `k` outputs written by `f`.
    pub fn integrate_by_region<F>(&self, q: &[f64], k: usize, f: F) -> Vec<RegionIntegral>
    where
        F: Fn(usize, &[f64], f64, &mut [f64]) + Sync,
    {
        assert_eq!(q.len(), self.n_goods, "quantity vector has wrong dimension");
        match &self.backend {
            Backend::Line(model) | Backend::Polygon(model) => {
                let fine = self.quadrature_sums(model, q, k, &f, true);
                let coarse = self.quadrature_sums(model, q, k, &f, false);
                fine.into_iter()
                    .zip(coarse)
                    .map(|(v, c)| RegionIntegral {
                        errors: v.iter().zip(&c).map(|(a, b)| (a - b).abs()).collect(),
                        values: v,
                    })
                    .collect()
            }
            Backend::Points(points) => self.point_sums(points, q, k, &f),
        }
    }

    pub fn choice_integrals(&self, q: &[f64]) -> ChoiceIntegrals {
        let out = self.integrate_by_region(q, 2, |r, theta, lambda, buf| {
            buf[0] = 1.0;
            buf[1] = theta[r] * lambda;
        });
        ChoiceIntegrals {
            masses: out[0].values.clone(),
            mass_errors: out[0].errors.clone(),
            moments: out[1].values.clone(),
            moment_errors: out[1].errors.clone(),
        }
    }

    /// `∫ max_j log(theta_j q_j) dG` with its error estimate.
    pub fn log_utility(&self, q: &[f64]) -> (f64, f64) {
        let out = self.integrate_by_region(q, 1, |r, theta, _, buf| {
            buf[0] = (theta[r] * q[r]).ln();
        });
        (out[0].total(), out[0].errors.iter().sum())
    }

    fn quadrature_sums<F>(&self, model: &RenormalizedModel, q: &[f64], k: usize, f: &F, fine: bool) -> Vec<Vec<f64>>
    where
        F: Fn(usize, &[f64], f64, &mut [f64]),
    {
        let n = self.n_goods;
        let mut acc = vec![vec![NeumaierSum::default(); n]; k];
        let mut buf = vec![0.0; k];
        let mut visit = |r: usize, theta: &[f64], w: f64| {
            let (g, lg) = model.ray_moments(theta);
            if g > 0.0 && w > 0.0 {
                f(r, theta, lg / g, &mut buf);
                for (a, b) in acc.iter_mut().zip(&buf) {
                    a[r].add(w * g * b);
                }
            }
        };
        match n {
            2 => {
                let rule = if fine { gl64() } else { gl32() };
                line_nodes(model, q, rule, &mut visit);
            }
            3 => {
                let rule = if fine { gl16() } else { gl8() };
                polygon_nodes(model, q, rule, &mut visit);
            }
            _ => unreachable!("quadrature backends exist for N = 2, 3"),
        }
        acc.into_iter()
            .map(|row| row.into_iter().map(|s| s.value()).collect())
            .collect()
    }

    fn point_sums<F>(&self, points: &PointSet, q: &[f64], k: usize, f: &F) -> Vec<RegionIntegral>
    where
        F: Fn(usize, &[f64], f64, &mut [f64]) + Sync,
    {
        let n = self.n_goods;
        let n_chunks = points.len().div_ceil(CHUNK);
        // per chunk: first/second weighted moments per (output, region)
        let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut s1 = vec![0.0; k * n];
                let mut s2 = vec![0.0; k * n];
                let mut buf = vec![0.0; k];
                for i in c * CHUNK..((c + 1) * CHUNK).min(points.len()) {
                    let theta = points.theta(i);
                    let r = region_of(theta, q);
                    f(r, theta, points.lambda(i), &mut buf);
                    let w = points.weight(i);
                    for (j, b) in buf.iter().enumerate() {
                        s1[j * n + r] += w * b;
                        s2[j * n + r] += w * b * b;
                    }
                }
                (s1, s2)
            })
            .collect();
        let mut m1 = vec![NeumaierSum::default(); k * n];
        let mut m2 = vec![NeumaierSum::default(); k * n];
        for (s1, s2) in &partial {
            for i in 0..k * n {
                m1[i].add(s1[i]);
                m2[i].add(s2[i]);
            }
        }
        let count = points.len() as f64;
        (0..k)
            .map(|j| {
                let values: Vec<f64> = (0..n).map(|r| m1[j * n + r].value()).collect();
                let errors = (0..n)
                    .map(|r| {
                        if !points.is_sampled() || count < 2.0 {
                            return 0.0;
                        }
                        let mean = values[r];
                        let var = (m2[j * n + r].value() - mean * mean).max(0.0);
                        (var * count / (count - 1.0) / count).sqrt()
                    })
                    .collect();
                RegionIntegral { values, errors }
            })
            .collect()
    }
}

fn line_nodes(model: &RenormalizedModel, q: &[f64], rule: &GaussLegendre, visit: &mut impl FnMut(usize, &[f64], f64)) {
    let t0 = q[1] / (q[0] + q[1]);
    let breaks = model.t_breaks();
    for (r, (lo, hi)) in [(0usize, (t0, 1.0)), (1, (0.0, t0))] {
        for (a, b) in pieces(lo, hi, &breaks) {
            for (t, w) in rule.mapped(a, b) {
                visit(r, &[t, 1.0 - t], w);
            }
        }
    }
}

/// Linear functional `sum_k w_k theta_k` in the chart `(theta_1, theta_2)`.
fn chart_form(w: [f64; 3]) -> [f64; 3] {
    [w[0] - w[2], w[1] - w[2], w[2]]
}

/// Keeps the part of a convex polygon where `h[0] x + h[1] y + h[2] >= 0`.
fn clip(poly: &[Point2], h: [f64; 3]) -> Vec<Point2> {
    let side = |p: &Point2| h[0] * p[0] + h[1] * p[1] + h[2];
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (sa, sb) = (side(&a), side(&b));
        if sa >= 0.0 {
            out.push(a);
        }
        if (sa >= 0.0) != (sb >= 0.0) {
            let t = sa / (sa - sb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

fn polygon_area(poly: &[Point2]) -> f64 {
    let mut s = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s.abs()
}

/// Tensor rule on a triangle collapsed at its first vertex.
fn triangle_nodes(tri: [Point2; 3], rule: &GaussLegendre, mut visit: impl FnMut(Point2, f64)) {
    let [p0, p1, p2] = tri;
    let e1 = [p1[0] - p0[0], p1[1] - p0[1]];
    let e2 = [p2[0] - p1[0], p2[1] - p1[1]];
    let det = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
    for (u, wu) in rule.mapped(0.0, 1.0) {
        for (v, wv) in rule.mapped(0.0, 1.0) {
            let p = [p0[0] + u * e1[0] + u * v * e2[0], p0[1] + u * e1[1] + u * v * e2[1]];
            visit(p, wu * wv * u * det);
        }
    }
}

fn polygon_nodes(
    model: &RenormalizedModel,
    q: &[f64],
    rule: &GaussLegendre,
    visit: &mut impl FnMut(usize, &[f64], f64),
) {
    let upper = model.base().support_upper().to_vec();
    let simplex: Vec<Point2> = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let unit = |i: usize, c: f64| {
        let mut w = [0.0; 3];
        w[i] = c;
        w
    };
    for r in 0..3 {
        let mut region = simplex.clone();
        for j in (0..3).filter(|&j| j != r) {
            let mut w = unit(r, q[r]);
            w[j] -= q[j];
            region = clip(&region, chart_form(w));
        }
        // g is smooth where the same coordinate reaches the support box first
        for cell in 0..3 {
            let mut poly = region.clone();
            for b in (0..3).filter(|&b| b != cell) {
                let mut w = unit(cell, 1.0 / upper[cell]);
                w[b] -= 1.0 / upper[b];
                poly = clip(&poly, chart_form(w));
            }
            if poly.len() < 3 || polygon_area(&poly) < 1e-15 {
                continue;
            }
            for i in 1..poly.len() - 1 {
                triangle_nodes([poly[0], poly[i], poly[i + 1]], rule, |p, w| {
                    let theta = [p[0], p[1], (1.0 - p[0] - p[1]).max(0.0)];
                    visit(r, &theta, w);
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Marginal, ValueModel};

    fn uniform() -> RenormalizedModel {
        RenormalizedModel::new(ValueModel::uniform_square())
    }

    #[test]
    fn region_of_examples() {
        assert_eq!(region_of(&[0.7, 0.3], &[2.0, 2.0]), 0);
        assert_eq!(region_of(&[0.5, 0.5], &[2.0, 2.0]), 0);
        assert_eq!(region_of(&[0.4, 0.6], &[0.3, 0.45]), 1);
    }

    #[test]
    fn indifference_type_inverts_quantities() {
        let t = indifference_type(&[0.3, 0.45]);
        assert!((t[0] - 0.6).abs() < 1e-15 && (t[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn line_masses_match_closed_forms() {
        let gi = GIntegrator::quadrature(&uniform()).unwrap();
        let c = gi.choice_integrals(&[0.3, 0.45]);
        assert!((c.masses[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((c.masses[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.moments[0] - 0.4 / 1.8).abs() < 1e-12);
        assert!(c.mass_errors.iter().all(|&e| e < 1e-10));
    }

    #[test]
    fn log_utility_uniform_value() {
        // ∫_{1/2}^1 log t / t^2 dt = 1 + 2 log(1/2)
        let gi = GIntegrator::quadrature(&uniform()).unwrap();
        let (v, _) = gi.log_utility(&[1.0, 1.0]);
        let exact = 1.0 + 2.0 * 0.5f64.ln();
        assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
        assert!((v + 0.3863).abs() < 1e-4);
    }

    #[test]
    fn polygon_masses_for_three_uniform_goods() {
        let m = RenormalizedModel::new(ValueModel::iid(3, Marginal::Uniform { upper: 1.0 }).unwrap());
        let gi = GIntegrator::quadrature(&m).unwrap();
        let c = gi.choice_integrals(&[1.0, 1.0, 1.0]);
        for i in 0..3 {
            assert!((c.masses[i] - 1.0 / 3.0).abs() < 1e-10, "{:?}", c.masses);
            // E[V_i 1{V_i max}] = E[max]/3 = (3/4)/3
            assert!((c.moments[i] - 0.25).abs() < 1e-10, "{:?}", c.moments);
        }
    }

    #[test]
    fn polygon_agrees_with_monte_carlo_off_symmetry() {
        let m = RenormalizedModel::new(ValueModel::iid(3, Marginal::Power { exponent: 2.0 }).unwrap());
        let quad = GIntegrator::quadrature(&m).unwrap();
        let mc = GIntegrator::monte_carlo(&m, 200_000, 5).unwrap();
        let q = [1.0, 1.4, 0.8];
        let a = quad.choice_integrals(&q);
        let b = mc.choice_integrals(&q);
        assert!((a.masses.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..3 {
            assert!((a.masses[i] - b.masses[i]).abs() < 5.0 * b.mass_errors[i] + 1e-4);
            assert!((a.moments[i] - b.moments[i]).abs() < 5.0 * b.moment_errors[i] + 1e-4);
        }
    }

    #[test]
    fn point_mass_integrates_exactly() {
        let gi = GIntegrator::from_points(PointSet::point_mass(vec![0.5, 0.5], 1.0).unwrap());
        let (v, e) = gi.log_utility(&[1.0, 1.0]);
        assert_eq!(v, 0.5f64.ln());
        assert_eq!(e, 0.0);
        assert_eq!(gi.choice_integrals(&[1.0, 1.0]).masses, vec![1.0, 0.0]);
    }

    #[test]
    fn point_sums_do_not_depend_on_thread_count() {
        let m = RenormalizedModel::new(ValueModel::corner_mass());
        let gi = GIntegrator::monte_carlo(&m, 50_000, 3).unwrap();
        let a = gi.choice_integrals(&[0.2, 0.25]);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| gi.choice_integrals(&[0.2, 0.25]));
        assert_eq!(a, b);
    }

    #[test]
    fn clip_halves_the_triangle() {
        let tri = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let half = clip(&tri, [1.0, -1.0, 0.0]);
        assert!((polygon_area(&half) - 0.25).abs() < 1e-15);
    }
}
