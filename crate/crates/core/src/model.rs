//! Value distributions over `R^N_+` and their renormalization to the simplex.
//!
//! A type `v` is summarized by its relative values `theta = v / sum(v)` and
//! its total `sum(v)`. The density of `theta` (in barycentric coordinates
//! `theta_1..theta_{N-1}`) is the ray integral
//! `g(theta) = int_0^inf f(s theta) s^(N-1) ds`, and the welfare weight is
//! `lambda(theta) = int f(s theta) s^N ds / g(theta)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{gl64, pieces};
use crate::rng::{chunks, halton, max_halton_dims, stream_rng};

/// A point of the (N-1)-simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint {
    coords: Vec<f64>,
}

impl SimplexPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Domain("simplex points need at least two coordinates".into()));
        }
        if coords.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::Domain("simplex coordinates must be nonnegative".into()));
        }
        let sum: f64 = coords.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("simplex coordinates sum to {sum}, not 1")));
        }
        Ok(Self { coords })
    }

    /// Two-good point `(t, 1 - t)`.
    pub fn from_t(t: f64) -> Result<Self> {
        Self::new(vec![t, 1.0 - t])
    }

    pub fn barycenter(n: usize) -> Self {
        Self {
            coords: vec![1.0 / n as f64; n],
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.coords
    }
}

/// `v / sum(v)`.
pub fn renormalize(v: &[f64]) -> Result<SimplexPoint> {
    if v.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Domain("value vectors must be nonnegative".into()));
    }
    let sum: f64 = v.iter().sum();
    if sum <= 0.0 {
        return Err(Error::Domain("renormalization undefined at origin".into()));
    }
    Ok(SimplexPoint {
        coords: v.iter().map(|x| x / sum).collect(),
    })
}

/// One-dimensional marginal on a bounded interval `[0, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    /// Uniform on `[0, upper]`.
    Uniform { upper: f64 },
    /// `F(x) = x^exponent` on `[0, 1]`.
    Power { exponent: f64 },
    /// Density proportional to `exp(rate * x)` on `[0, 1]`.
    Exponential { rate: f64 },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Uniform { upper } if !(upper > 0.0 && upper.is_finite()) => {
                Err(Error::Config("uniform marginal needs a positive upper bound".into()))
            }
            Marginal::Power { exponent } if !(exponent > 0.0 && exponent.is_finite()) => {
                Err(Error::Config("power marginal needs a positive exponent".into()))
            }
            Marginal::Exponential { rate } if rate == 0.0 || !rate.is_finite() => {
                Err(Error::Config("exponential marginal needs a finite nonzero rate".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn upper(&self) -> f64 {
        match *self {
            Marginal::Uniform { upper } => upper,
            _ => 1.0,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=self.upper()).contains(&x) {
            return 0.0;
        }
        match *self {
            Marginal::Uniform { upper } => 1.0 / upper,
            Marginal::Power { exponent } => exponent * x.powf(exponent - 1.0),
            Marginal::Exponential { rate } => rate * (rate * x).exp() / rate.exp_m1(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.upper() {
            return 1.0;
        }
        match *self {
            Marginal::Uniform { upper } => x / upper,
            Marginal::Power { exponent } => x.powf(exponent),
            Marginal::Exponential { rate } => (rate * x).exp_m1() / rate.exp_m1(),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match *self {
            Marginal::Uniform { upper } => u * upper,
            Marginal::Power { exponent } => u.powf(1.0 / exponent),
            Marginal::Exponential { rate } => (u * rate.exp_m1()).ln_1p() / rate,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Uniform { upper } => upper / 2.0,
            Marginal::Power { exponent } => exponent / (exponent + 1.0),
            Marginal::Exponential { rate } => (rate.exp() * (rate - 1.0) + 1.0) / (rate * rate.exp_m1()),
        }
    }

    /// `lim_{x -> 0+} x f(x) / F(x)`.
    pub fn ratio_limit_at_zero(&self) -> f64 {
        match *self {
            Marginal::Uniform { .. } | Marginal::Exponential { .. } => 1.0,
            Marginal::Power { exponent } => exponent,
        }
    }
}

/// Distribution families understood by the solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Two goods, values i.i.d. uniform on `[0, 1]^2`.
    UniformSquare,
    /// Two goods on `[0, 1]^2`: density `hi` on the corner triangles
    /// `v1 + v2 <= a` and `v1 + v2 >= 2 - a`, and `lo` in between.
    CornerMass { a: f64, hi: f64, lo: f64 },
    /// `n_goods` i.i.d. coordinates.
    Iid { n_goods: usize, marginal: Marginal },
    /// Piecewise-constant density on a regular grid over `[0, upper]^N`.
    /// `weights` are cell masses in row-major order (first coordinate fastest)
    /// and are normalized on construction.
    CustomPiecewise {
        n_goods: usize,
        upper: f64,
        bins: usize,
        weights: Vec<f64>,
    },
}

impl Family {
    /// Corner-mass parameters of the three-option example: `a = 0.2`, `hi = 20`, `lo = 5/24`.
    pub fn corner_mass_default() -> Self {
        Family::CornerMass {
            a: 0.2,
            hi: 20.0,
            lo: 5.0 / 24.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::UniformSquare => "uniform_square",
            Family::CornerMass { .. } => "corner_mass",
            Family::Iid { .. } => "iid",
            Family::CustomPiecewise { .. } => "custom_piecewise",
        }
    }
}

/// Mean with a standard error (zero for closed forms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// `n` value vectors stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    n_goods: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn new(n_goods: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len() % n_goods, 0);
        Self { n_goods, data }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n_goods
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn n_goods(&self) -> usize {
        self.n_goods
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_goods..(i + 1) * self.n_goods]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.n_goods)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.iter().map(|v| v.to_vec()).collect()
    }
}

/// A validated value distribution. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueModel {
    family: Family,
    n_goods: usize,
    upper: Vec<f64>,
    // custom_piecewise: normalized cell masses and their cumulative sums
    cells: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ValueModel {
    pub fn new(family: Family) -> Result<Self> {
        let mut cells = Vec::new();
        let mut cumulative = Vec::new();
        let (n_goods, upper) = match &family {
            Family::UniformSquare => (2, vec![1.0; 2]),
            Family::CornerMass { a, hi, lo } => {
                let (a, hi, lo) = (*a, *hi, *lo);
                if !(a > 0.0 && a <= 1.0) || hi < 0.0 || lo < 0.0 {
                    return Err(Error::Config(
                        "corner_mass needs 0 < a <= 1 and nonnegative densities".into(),
                    ));
                }
                let total = a * a * hi + (1.0 - a * a) * lo;
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "corner_mass density integrates to {total}, not 1"
                    )));
                }
                (2, vec![1.0; 2])
            }
            Family::Iid { n_goods, marginal } => {
                marginal.validate()?;
                if *n_goods < 2 {
                    return Err(Error::Config("n_goods must be at least 2".into()));
                }
                (*n_goods, vec![marginal.upper(); *n_goods])
            }
            Family::CustomPiecewise {
                n_goods,
                upper,
                bins,
                weights,
            } => {
                if *n_goods < 2 || *bins < 1 || !(*upper > 0.0) {
                    return Err(Error::Config(
                        "custom_piecewise needs n_goods >= 2, bins >= 1, upper > 0".into(),
                    ));
                }
                let expected = bins.checked_pow(*n_goods as u32).unwrap_or(usize::MAX);
                if weights.len() != expected {
                    return Err(Error::Config(format!(
                        "custom_piecewise expects {expected} cell weights, got {}",
                        weights.len()
                    )));
                }
                if weights.iter().any(|&w| !(w >= 0.0)) {
                    return Err(Error::Config("cell weights must be nonnegative".into()));
                }
                let total: f64 = weights.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::Config("cell weights sum to zero".into()));
                }
                cells = weights.iter().map(|w| w / total).collect();
                let mut acc = 0.0;
                cumulative = cells
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                (*n_goods, vec![*upper; *n_goods])
            }
        };
        Ok(Self {
            family,
            n_goods,
            upper,
            cells,
            cumulative,
        })
    }

    pub fn uniform_square() -> Self {
        Self::new(Family::UniformSquare).expect("valid family")
    }

    pub fn corner_mass() -> Self {
        Self::new(Family::corner_mass_default()).expect("valid family")
    }

    pub fn iid(n_goods: usize, marginal: Marginal) -> Result<Self> {
        Self::new(Family::Iid { n_goods, marginal })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn n_goods(&self) -> usize {
        self.n_goods
    }

    pub fn support_upper(&self) -> &[f64] {
        &self.upper
    }

    /// The i.i.d. marginal, when the family has one.
    pub fn marginal(&self) -> Option<Marginal> {
        match &self.family {
            Family::UniformSquare => Some(Marginal::Uniform { upper: 1.0 }),
            Family::Iid { marginal, .. } => Some(marginal.clone()),
            _ => None,
        }
    }

    /// Density invariant under coordinate permutations.
    pub fn is_exchangeable(&self) -> bool {
        match &self.family {
            Family::UniformSquare | Family::CornerMass { .. } | Family::Iid { .. } => true,
            Family::CustomPiecewise { bins, .. } => {
                let n = self.n_goods;
                let b = *bins;
                let mut idx = vec![0usize; n];
                for (flat, &w) in self.cells.iter().enumerate() {
                    let mut r = flat;
                    for slot in idx.iter_mut() {
                        *slot = r % b;
                        r /= b;
                    }
                    // adjacent transpositions generate all permutations
                    for k in 0..n - 1 {
                        let mut j = idx.clone();
                        j.swap(k, k + 1);
                        let other = j.iter().rev().fold(0usize, |acc, &d| acc * b + d);
                        if (self.cells[other] - w).abs() > 1e-12 {
                            return false;
                        }
                    }
                }
                true
            }
        }
    }

    /// Joint density `f(v)`; zero outside the support box.
    pub fn density(&self, v: &[f64]) -> f64 {
        if v.len() != self.n_goods || v.iter().zip(&self.upper).any(|(&x, &u)| !(x >= 0.0 && x <= u)) {
            return 0.0;
        }
        match &self.family {
            Family::UniformSquare => 1.0,
            Family::CornerMass { a, hi, lo } => {
                let s = v[0] + v[1];
                if s <= *a || s >= 2.0 - *a {
                    *hi
                } else {
                    *lo
                }
            }
            Family::Iid { marginal, .. } => v.iter().map(|&x| marginal.pdf(x)).product(),
            Family::CustomPiecewise { upper, bins, .. } => {
                let h = upper / *bins as f64;
                let mut flat = 0usize;
                for &x in v.iter().rev() {
                    let k = ((x / h) as usize).min(bins - 1);
                    flat = flat * bins + k;
                }
                self.cells[flat] / h.powi(self.n_goods as i32)
            }
        }
    }

    /// Largest `s` with `s * theta` inside the support box.
    pub fn ray_extent(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.upper)
            .filter(|(&t, _)| t > 0.0)
            .map(|(&t, &u)| u / t)
            .fold(f64::INFINITY, f64::min)
    }

    /// Points `s` along the ray through `theta` where `f(s theta)` may jump.
    pub fn ray_breaks(&self, theta: &[f64]) -> Vec<f64> {
        match &self.family {
            Family::CornerMass { a, .. } => {
                let total: f64 = theta.iter().sum();
                vec![a / total, (2.0 - a) / total]
            }
            Family::CustomPiecewise { upper, bins, .. } => {
                let h = upper / *bins as f64;
                let mut out = Vec::new();
                for &t in theta.iter().filter(|&&t| t > 0.0) {
                    for k in 1..*bins {
                        out.push(k as f64 * h / t);
                    }
                }
                out
            }
            _ => Vec::new(),
        }
    }

    /// For two goods: values of `t = theta_1` where `g(t)` or `lambda(t)` may kink.
    pub fn t_breaks(&self) -> Vec<f64> {
        if self.n_goods != 2 {
            return Vec::new();
        }
        let (u1, u2) = (self.upper[0], self.upper[1]);
        let mut out = vec![u1 / (u1 + u2)];
        match &self.family {
            Family::CornerMass { a, .. } => {
                for b in [*a, 2.0 - *a] {
                    // extent 1/t on t >= 1/2 and 1/(1-t) on t <= 1/2
                    let t_hi = 1.0 / b;
                    if (0.5..=1.0).contains(&t_hi) {
                        out.push(t_hi);
                    }
                    let t_lo = 1.0 - 1.0 / b;
                    if (0.0..=0.5).contains(&t_lo) {
                        out.push(t_lo);
                    }
                }
            }
            Family::CustomPiecewise { upper, bins, .. } => {
                let h = upper / *bins as f64;
                for i in 0..=*bins {
                    for j in 0..=*bins {
                        if i + j == 0 {
                            continue;
                        }
                        let (x, y) = (i as f64 * h, j as f64 * h);
                        out.push(x / (x + y));
                    }
                }
            }
            _ => {}
        }
        out.retain(|&t| t > 0.0 && t < 1.0);
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        out
    }

    fn has_halton(&self) -> bool {
        matches!(self.family, Family::UniformSquare | Family::Iid { .. }) && self.n_goods <= max_halton_dims()
    }

    fn draw<R: Rng>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match &self.family {
            Family::UniformSquare => {
                out.push(rng.gen());
                out.push(rng.gen());
            }
            Family::CornerMass { a, hi, lo } => {
                let corner = hi * a * a / 2.0;
                let u: f64 = rng.gen();
                if u < 2.0 * corner {
                    let (mut x, mut y): (f64, f64) = (a * rng.gen::<f64>(), a * rng.gen::<f64>());
                    if x + y > *a {
                        x = a - x;
                        y = a - y;
                    }
                    if u < corner {
                        out.push(x);
                        out.push(y);
                    } else {
                        out.push(1.0 - x);
                        out.push(1.0 - y);
                    }
                } else {
                    debug_assert!(*lo > 0.0);
                    loop {
                        let (x, y): (f64, f64) = (rng.gen(), rng.gen());
                        let s = x + y;
                        if s > *a && s < 2.0 - a {
                            out.push(x);
                            out.push(y);
                            break;
                        }
                    }
                }
            }
            Family::Iid { marginal, .. } => {
                for _ in 0..self.n_goods {
                    out.push(marginal.quantile(rng.gen()));
                }
            }
            Family::CustomPiecewise { upper, bins, .. } => {
                let u: f64 = rng.gen();
                let flat = self.cumulative.partition_point(|&c| c < u).min(self.cells.len() - 1);
                let h = upper / *bins as f64;
                let mut r = flat;
                for _ in 0..self.n_goods {
                    let k = r % bins;
                    r /= bins;
                    out.push((k as f64 + rng.gen::<f64>()) * h);
                }
            }
        }
    }

    /// `n` i.i.d. draws from `F`, reproducible from `(seed, n)` and independent
    /// of the worker count.
    pub fn sample_values(&self, n: usize, seed: u64) -> Samples {
        let parts: Vec<Vec<f64>> = chunks(n)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(k, start, end)| {
                let mut rng = stream_rng(seed, k);
                let mut buf = Vec::with_capacity((end - start) * self.n_goods);
                for _ in start..end {
                    self.draw(&mut rng, &mut buf);
                }
                buf
            })
            .collect();
        Samples::new(self.n_goods, parts.concat())
    }

    /// Quasi-random draws (Halton through the marginal quantile) when the
    /// family supports it; pseudo-random draws otherwise.
    pub fn sample_quasi(&self, n: usize, seed: u64) -> Samples {
        if !self.has_halton() {
            return self.sample_values(n, seed);
        }
        let marginal = self.marginal().expect("halton families have marginals");
        let mut data = Vec::with_capacity(n * self.n_goods);
        for i in 0..n as u64 {
            for d in 0..self.n_goods {
                data.push(marginal.quantile(halton(i, d)));
            }
        }
        Samples::new(self.n_goods, data)
    }

    /// `E[sum_j V_j]` in closed form.
    pub fn expected_total_value(&self) -> Estimate {
        let value = match &self.family {
            Family::UniformSquare => 1.0,
            // symmetric under v -> 1 - v
            Family::CornerMass { .. } => 1.0,
            Family::Iid { n_goods, marginal } => *n_goods as f64 * marginal.mean(),
            Family::CustomPiecewise { upper, bins, .. } => {
                let h = upper / *bins as f64;
                self.cells
                    .iter()
                    .enumerate()
                    .map(|(flat, w)| {
                        let mut r = flat;
                        let mut centre = 0.0;
                        for _ in 0..self.n_goods {
                            centre += (r % bins) as f64 * h + h / 2.0;
                            r /= bins;
                        }
                        w * centre
                    })
                    .sum()
            }
        };
        Estimate { value, std_error: 0.0 }
    }

    /// Monte Carlo estimate of `E[sum_j V_j]`.
    pub fn expected_total_value_mc(&self, n: usize, seed: u64) -> Estimate {
        let samples = self.sample_values(n, seed);
        let mut mv = crate::numeric::MeanVar::default();
        for v in samples.iter() {
            mv.push(v.iter().sum());
        }
        Estimate {
            value: mv.mean(),
            std_error: mv.std_error(),
        }
    }

    /// Closed-form ray moments `(int f s^(N-1), int f s^N)` where registered.
    fn ray_moments_closed(&self, theta: &[f64]) -> Option<(f64, f64)> {
        let n = self.n_goods as i32;
        let smax = self.ray_extent(theta);
        match &self.family {
            Family::UniformSquare
            | Family::Iid {
                marginal: Marginal::Uniform { .. },
                ..
            } => {
                let c: f64 = self.upper.iter().map(|u| 1.0 / u).product();
                Some((c * smax.powi(n) / n as f64, c * smax.powi(n + 1) / (n + 1) as f64))
            }
            Family::CornerMass { a, hi, lo } => {
                let total: f64 = theta.iter().sum();
                let seg = |lo_s: f64, hi_s: f64, k: i32| -> f64 {
                    if hi_s <= lo_s {
                        0.0
                    } else {
                        (hi_s.powi(k + 1) - lo_s.powi(k + 1)) / (k + 1) as f64
                    }
                };
                let b1 = (a / total).min(smax);
                let b2 = ((2.0 - a) / total).min(smax);
                let m = |k: i32| hi * seg(0.0, b1, k) + lo * seg(b1, b2, k) + hi * seg(b2, smax, k);
                Some((m(1), m(2)))
            }
            _ => None,
        }
    }

    /// Ray moments by Gauss–Legendre quadrature split at density breaks.
    fn ray_moments_quadrature(&self, theta: &[f64]) -> (f64, f64) {
        let smax = self.ray_extent(theta);
        if !smax.is_finite() {
            return (0.0, 0.0);
        }
        let n = self.n_goods as i32;
        let breaks = self.ray_breaks(theta);
        let rule = gl64();
        let mut point = vec![0.0; self.n_goods];
        let (mut lo_m, mut hi_m) = (0.0, 0.0);
        for (a, b) in pieces(0.0, smax, &breaks) {
            for (s, w) in rule.mapped(a, b) {
                for (p, t) in point.iter_mut().zip(theta) {
                    *p = s * t;
                }
                let f = self.density(&point);
                let sn1 = s.powi(n - 1);
                lo_m += w * f * sn1;
                hi_m += w * f * sn1 * s;
            }
        }
        (lo_m, hi_m)
    }
}

/// The renormalized view of a [`ValueModel`]: density `g` of `Theta` and the
/// weight `lambda`.
#[derive(Debug, Clone)]
pub struct RenormalizedModel {
    base: ValueModel,
    closed_form: bool,
}

impl RenormalizedModel {
    /// Uses registered closed forms where available.
    pub fn new(base: ValueModel) -> Self {
        Self {
            base,
            closed_form: true,
        }
    }

    /// Always integrates along rays.
    pub fn quadrature_only(base: ValueModel) -> Self {
        Self {
            base,
            closed_form: false,
        }
    }

    pub fn base(&self) -> &ValueModel {
        &self.base
    }

    pub fn n_goods(&self) -> usize {
        self.base.n_goods
    }

    pub fn uses_closed_form(&self) -> bool {
        self.closed_form && self.base.ray_moments_closed(&[0.5, 0.5]).is_some()
    }

    /// `(g(theta), lambda(theta) g(theta))`.
    pub fn ray_moments(&self, theta: &[f64]) -> (f64, f64) {
        if self.closed_form {
            if let Some(m) = self.base.ray_moments_closed(theta) {
                return m;
            }
        }
        self.base.ray_moments_quadrature(theta)
    }

    pub fn g(&self, theta: &[f64]) -> f64 {
        self.ray_moments(theta).0
    }

    pub fn lambda_g(&self, theta: &[f64]) -> f64 {
        self.ray_moments(theta).1
    }

    pub fn lambda(&self, theta: &[f64]) -> Result<f64> {
        let (g, lg) = self.ray_moments(theta);
        if !(g > 0.0) {
            return Err(Error::Domain("λ undefined outside support of G".into()));
        }
        Ok(lg / g)
    }

    pub fn g_density(&self, theta: &SimplexPoint) -> f64 {
        self.g(theta.coords())
    }

    pub fn lambda_weight(&self, theta: &SimplexPoint) -> Result<f64> {
        self.lambda(theta.coords())
    }

    /// Two-good density of `t = theta_1`.
    pub fn g_t(&self, t: f64) -> f64 {
        self.g(&[t, 1.0 - t])
    }

    pub fn lambda_g_t(&self, t: f64) -> f64 {
        self.lambda_g(&[t, 1.0 - t])
    }

    pub fn lambda_t(&self, t: f64) -> Result<f64> {
        self.lambda(&[t, 1.0 - t])
    }

    /// Kinks of `g(t)` and `lambda(t) g(t)` inside `(0, 1)`.
    pub fn t_breaks(&self) -> Vec<f64> {
        self.base.t_breaks()
    }

    /// `g'(t)`: closed form for uniform boxes, otherwise a fourth-order
    /// stencil kept inside the smooth piece containing `t` (one-sided at
    /// piece ends).
    pub fn g_t_derivative(&self, t: f64) -> f64 {
        if self.closed_form {
            if let Some(d) = self.g_t_derivative_closed(t) {
                return d;
            }
        }
        self.g_t_derivative_numeric(t)
    }

    fn g_t_derivative_closed(&self, t: f64) -> Option<f64> {
        let uniform_box = matches!(
            self.base.family(),
            Family::UniformSquare
                | Family::Iid {
                    marginal: Marginal::Uniform { .. },
                    ..
                }
        );
        if !uniform_box || self.n_goods() != 2 {
            return None;
        }
        let (u1, u2) = (self.base.upper[0], self.base.upper[1]);
        // g = smax^2 / (2 u1 u2) with smax = min(u1 / t, u2 / (1 - t))
        Some(if t >= u1 / (u1 + u2) {
            -u1 / (u2 * t.powi(3))
        } else {
            u2 / (u1 * (1.0 - t).powi(3))
        })
    }

    pub fn g_t_derivative_numeric(&self, t: f64) -> f64 {
        let mut edges = vec![0.0];
        edges.extend(self.t_breaks());
        edges.push(1.0);
        let k = edges.windows(2).position(|w| t >= w[0] && t <= w[1]).unwrap_or(0);
        let (lo, hi) = (edges[k], edges[k + 1]);
        let h = (1e-3f64).min((hi - lo) / 16.0);
        let f = |x: f64| self.g_t(x);
        if t - 2.0 * h >= lo && t + 2.0 * h <= hi {
            (-f(t + 2.0 * h) + 8.0 * f(t + h) - 8.0 * f(t - h) + f(t - 2.0 * h)) / (12.0 * h)
        } else if t + 4.0 * h <= hi {
            (-25.0 * f(t) + 48.0 * f(t + h) - 36.0 * f(t + 2.0 * h) + 16.0 * f(t + 3.0 * h) - 3.0 * f(t + 4.0 * h))
                / (12.0 * h)
        } else {
            (25.0 * f(t) - 48.0 * f(t - h) + 36.0 * f(t - 2.0 * h) - 16.0 * f(t - 3.0 * h) + 3.0 * f(t - 4.0 * h))
                / (12.0 * h)
        }
    }
}
