//! Small numerical kernels: Gauss–Legendre rules, compensated summation,
//! bracketing searches and a dense partial-pivot LU for tiny systems.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        if b == a {
            return 0.0;
        }
        let mut acc = NeumaierSum::default();
        for (x, w) in self.mapped(a, b) {
            acc.add(w * f(x));
        }
        acc.value()
    }

    /// Integrates over `[a, b]`, splitting at every break point strictly inside.
    pub fn integrate_split<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, breaks: &[f64], mut f: F) -> f64 {
        let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut acc = NeumaierSum::default();
        for (p, q) in pieces(lo, hi, breaks) {
            acc.add(self.integrate(p, q, &mut f));
        }
        sign * acc.value()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Splits `[lo, hi]` into consecutive sub-intervals at the given breaks.
pub fn pieces(lo: f64, hi: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&b| b > lo && b < hi).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + b.abs()));
    let mut out = Vec::with_capacity(pts.len() + 1);
    let mut start = lo;
    for p in pts {
        if p - start > 0.0 {
            out.push((start, p));
            start = p;
        }
    }
    if hi > start {
        out.push((start, hi));
    }
    out
}

/// Shared 64-node rule used for ray and simplex integrals.
pub fn gl64() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(64))
}

pub fn gl32() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(32))
}

pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

pub fn gl8() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(8))
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Running mean and variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanVar {
    n: u64,
    mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MeanVar) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Golden-section search for a maximum of `f` on `[a, b]`.
///
/// Returns the best point, its value, and the bracket history.
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    width: f64,
) -> (f64, f64, Vec<(f64, f64)>) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut log = vec![(a, b)];
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > width {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        log.push((a, b));
        if log.len() > 200 {
            break;
        }
    }
    if fc >= fd {
        (c, fc, log)
    } else {
        (d, fd, log)
    }
}

/// Dense LU with partial pivoting for small square systems.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factorizes `a` (row-major rows). Pivots below `1e-14 * max|a|` are singular.
    pub fn factor(a: &[Vec<f64>]) -> Result<Self> {
        let n = a.len();
        if a.iter().any(|row| row.len() != n) {
            return Err(Error::Domain("matrix must be square".into()));
        }
        let scale = a.iter().flat_map(|r| r.iter()).fold(0.0f64, |m, &x| m.max(x.abs()));
        let mut lu: Vec<f64> = a.iter().flat_map(|r| r.iter().copied()).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pv) =
                (k..n)
                    .map(|i| (i, lu[i * n + k].abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pv <= 1e-14 * scale || pv == 0.0 {
                return Err(Error::Singular {
                    pivot: k,
                    value: lu[p * n + k],
                });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let piv = lu[k * n + k];
            for i in (k + 1)..n {
                let l = lu[i * n + k] / piv;
                lu[i * n + k] = l;
                for j in (k + 1)..n {
                    lu[i * n + j] -= l * lu[k * n + j];
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                x[i] -= self.lu[i * n + j] * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }

    /// Infinity-norm condition number of the original matrix.
    pub fn condition_inf(&self, a: &[Vec<f64>]) -> f64 {
        let n = self.n;
        let norm_a = a
            .iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut inv_rows = vec![0.0; n];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv_rows[i] += col[i].abs();
            }
        }
        norm_a * inv_rows.into_iter().fold(0.0, f64::max)
    }
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(8);
        // degree 15 is the exactness limit for 8 nodes
        let v = rule.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let w: f64 = rule.mapped(-1.0, 1.0).map(|(_, w)| w).sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gl64_integrates_smooth_function() {
        let v = gl64().integrate(0.0, std::f64::consts::PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn split_integration_handles_kinks() {
        let v = gl16().integrate_split(0.0, 1.0, &[0.3], |x| (x - 0.3).abs());
        let exact = 0.3 * 0.3 / 2.0 + 0.7 * 0.7 / 2.0;
        assert!((v - exact).abs() < 1e-14);
        let back = gl16().integrate_split(1.0, 0.0, &[0.3], |x| (x - 0.3).abs());
        assert!((back + exact).abs() < 1e-14);
    }

    #[test]
    fn pieces_ignore_outside_and_duplicate_breaks() {
        let p = pieces(0.0, 1.0, &[-1.0, 0.5, 0.5, 2.0, 1.0]);
        assert_eq!(p, vec![(0.0, 0.5), (0.5, 1.0)]);
    }

    #[test]
    fn neumaier_recovers_small_terms() {
        let s: NeumaierSum = [1e16, 1.0, -1e16].into_iter().collect();
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn meanvar_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut all = MeanVar::default();
        xs.iter().for_each(|&x| all.push(x));
        let (mut a, mut b) = (MeanVar::default(), MeanVar::default());
        xs[..37].iter().for_each(|&x| a.push(x));
        xs[37..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean() - all.mean()).abs() < 1e-14);
        assert!((a.variance() - all.variance()).abs() < 1e-13);
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, fx, log) = golden_section_max(|x| -(x - 0.63).powi(2), 0.5, 1.0, 1e-8);
        assert!((x - 0.63).abs() < 1e-7);
        assert!(fx <= 0.0);
        assert!(log.len() > 10);
    }

    #[test]
    fn lu_solves_and_reports_singular_pivot() {
        let a = vec![vec![0.0, 2.0], vec![3.0, 1.0]];
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve(&[4.0, 5.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        let s = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        match Lu::factor(&s) {
            Err(Error::Singular { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected singular, got {other:?}"),
        }
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!((Lu::factor(&id).unwrap().condition_inf(&id) - 1.0).abs() < 1e-15);
    }
}
