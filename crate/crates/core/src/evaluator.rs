//! Simulating finite menus: best responses, demand, welfare, incentive checks
//! and the lottery game whose equilibrium reproduces market clearing.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Estimate, RenormalizedModel};
use crate::numeric::MeanVar;
use crate::rng::{chunks, stream_rng};
use crate::simplex::GIntegrator;

/// A finite list of bundles offered to every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MenuRepr")]
pub struct Menu {
    bundles: Vec<Vec<f64>>,
    labels: Vec<String>,
}

#[derive(Deserialize)]
struct MenuRepr {
    bundles: Vec<Vec<f64>>,
    #[serde(default)]
    labels: Option<Vec<String>>,
}

impl TryFrom<MenuRepr> for Menu {
    type Error = Error;

    fn try_from(r: MenuRepr) -> Result<Self> {
        match r.labels {
            Some(labels) => Menu::with_labels(r.bundles, labels),
            None => Menu::new(r.bundles),
        }
    }
}

impl Menu {
    pub fn new(bundles: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..bundles.len()).map(|i| format!("option_{i}")).collect();
        Self::with_labels(bundles, labels)
    }

    pub fn with_labels(bundles: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        let first = bundles
            .first()
            .ok_or_else(|| Error::Config("a menu needs at least one bundle".into()))?;
        let n = first.len();
        if n == 0 || bundles.iter().any(|b| b.len() != n) {
            return Err(Error::Config("menu bundles must share a positive dimension".into()));
        }
        if bundles.iter().flatten().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::Config("menu entries must be finite and nonnegative".into()));
        }
        if labels.len() != bundles.len() {
            return Err(Error::Config("one label per bundle".into()));
        }
        Ok(Self { bundles, labels })
    }

    pub fn len(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.is_empty()
    }

    pub fn n_goods(&self) -> usize {
        self.bundles[0].len()
    }

    pub fn bundle(&self, i: usize) -> &[f64] {
        &self.bundles[i]
    }

    pub fn bundles(&self) -> &[Vec<f64>] {
        &self.bundles
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Indirect utility `max_b theta · b`.
    pub fn utility(&self, theta: &[f64]) -> f64 {
        let i = best_response(theta, self);
        dot(theta, &self.bundles[i])
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the bundle maximizing `theta · b`, lowest index on ties.
pub fn best_response(theta: &[f64], menu: &Menu) -> usize {
    let mut best = 0;
    let mut best_value = dot(theta, &menu.bundles[0]);
    for (i, b) in menu.bundles.iter().enumerate().skip(1) {
        let v = dot(theta, b);
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub n_samples: usize,
    /// Mean of `v · y(v)`.
    pub welfare_v_space: Estimate,
    /// Mean of `lambda(theta) U(theta)` over the same draws.
    pub welfare_theta_space: Option<Estimate>,
    /// `|v - theta| / sqrt(se_v^2 + se_theta^2)`.
    pub welfare_gap_in_se: Option<f64>,
    pub demand: Vec<Estimate>,
    /// `s - demand`, when supplies are given.
    pub supply_slack: Option<Vec<f64>>,
    pub choice_shares: Vec<f64>,
}

#[derive(Clone, Default)]
struct Accumulator {
    welfare_v: MeanVar,
    welfare_theta: MeanVar,
    theta_ok: bool,
    demand: Vec<MeanVar>,
    choices: Vec<u64>,
}

impl Accumulator {
    fn new(n_goods: usize, n_options: usize) -> Self {
        Self {
            theta_ok: true,
            demand: vec![MeanVar::default(); n_goods],
            choices: vec![0; n_options],
            ..Self::default()
        }
    }

    fn merge(&mut self, other: &Self) {
        self.welfare_v.merge(&other.welfare_v);
        self.welfare_theta.merge(&other.welfare_theta);
        self.theta_ok &= other.theta_ok;
        for (a, b) in self.demand.iter_mut().zip(&other.demand) {
            a.merge(b);
        }
        for (a, b) in self.choices.iter_mut().zip(&other.choices) {
            *a += b;
        }
    }
}

fn estimate(mv: &MeanVar) -> Estimate {
    Estimate {
        value: mv.mean(),
        std_error: mv.std_error(),
    }
}

/// Runs `menu` on `n` draws from the model.
pub fn simulate(
    model: &RenormalizedModel,
    menu: &Menu,
    n: usize,
    seed: u64,
    supplies: Option<&[f64]>,
) -> Result<WelfareReport> {
    let n_goods = model.n_goods();
    if menu.n_goods() != n_goods {
        return Err(Error::Config(format!(
            "menu has {} goods but the model has {n_goods}",
            menu.n_goods()
        )));
    }
    if n == 0 {
        return Err(Error::Config("simulation needs at least one draw".into()));
    }
    let samples = model.base().sample_values(n, seed);
    let parts: Vec<Accumulator> = chunks(n)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(_, start, end)| {
            let mut acc = Accumulator::new(n_goods, menu.len());
            let mut theta = vec![0.0; n_goods];
            for i in start..end {
                let v = samples.get(i);
                let total: f64 = v.iter().sum();
                if total <= 0.0 {
                    acc.welfare_v.push(0.0);
                    acc.welfare_theta.push(0.0);
                    for d in acc.demand.iter_mut() {
                        d.push(0.0);
                    }
                    acc.choices[0] += 1;
                    continue;
                }
                for (t, x) in theta.iter_mut().zip(v) {
                    *t = x / total;
                }
                let k = best_response(&theta, menu);
                let b = menu.bundle(k);
                acc.choices[k] += 1;
                acc.welfare_v.push(dot(v, b));
                match model.lambda(&theta) {
                    Ok(l) => acc.welfare_theta.push(l * dot(&theta, b)),
                    Err(_) => acc.theta_ok = false,
                }
                for (d, x) in acc.demand.iter_mut().zip(b) {
                    d.push(*x);
                }
            }
            acc
        })
        .collect();
    let mut total = Accumulator::new(n_goods, menu.len());
    for p in &parts {
        total.merge(p);
    }
    let welfare_v_space = estimate(&total.welfare_v);
    let welfare_theta_space = total.theta_ok.then(|| estimate(&total.welfare_theta));
    let welfare_gap_in_se = welfare_theta_space.map(|t| {
        let se = (t.std_error.powi(2) + welfare_v_space.std_error.powi(2)).sqrt();
        let gap = (t.value - welfare_v_space.value).abs();
        if se > 0.0 {
            gap / se
        } else if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    });
    let demand: Vec<Estimate> = total.demand.iter().map(estimate).collect();
    Ok(WelfareReport {
        n_samples: n,
        welfare_v_space,
        welfare_theta_space,
        welfare_gap_in_se,
        supply_slack: supplies.map(|s| s.iter().zip(&demand).map(|(si, d)| si - d.value).collect()),
        demand,
        choice_shares: total.choices.iter().map(|&c| c as f64 / n as f64).collect(),
    })
}

/// A map from types to bundles.
pub trait AllocationRule {
    fn allocate(&self, theta: &[f64]) -> Vec<f64>;

    /// `theta · x(theta)`.
    fn utility(&self, theta: &[f64]) -> f64 {
        dot(theta, &self.allocate(theta))
    }
}

impl AllocationRule for Menu {
    fn allocate(&self, theta: &[f64]) -> Vec<f64> {
        self.bundle(best_response(theta, self)).to_vec()
    }

    fn utility(&self, theta: &[f64]) -> f64 {
        Menu::utility(self, theta)
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> AllocationRule for F {
    fn allocate(&self, theta: &[f64]) -> Vec<f64> {
        self(theta)
    }
}

/// `theta` is at least as close to vertex `i` as `other`:
/// `theta_k / theta_i <= other_k / other_i` for every `k != i`.
pub fn closer_to_vertex(theta: &[f64], other: &[f64], i: usize) -> bool {
    if theta[i] <= 0.0 || other[i] <= 0.0 {
        return false;
    }
    (0..theta.len())
        .filter(|&k| k != i)
        .all(|k| theta[k] * other[i] <= other[k] * theta[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioViolation {
    pub good: usize,
    pub theta: Vec<f64>,
    pub other: Vec<f64>,
    /// `U(theta) / theta_i`, which should not exceed `U(other) / other_i`.
    pub scaled_utility: f64,
    pub other_scaled_utility: f64,
}

/// Pairs violating `U(other)/other_i >= U(theta)/theta_i - tol` whenever
/// `theta` is closer to vertex `i` than `other`.
pub fn check_ratio_monotonicity<R: AllocationRule + ?Sized>(
    rule: &R,
    pairs: &[(Vec<f64>, Vec<f64>)],
    tol: f64,
) -> Vec<RatioViolation> {
    let mut out = Vec::new();
    for (theta, other) in pairs {
        let (u, uo) = (rule.utility(theta), rule.utility(other));
        for i in 0..theta.len() {
            if !closer_to_vertex(theta, other, i) {
                continue;
            }
            let (a, b) = (u / theta[i], uo / other[i]);
            if b < a - tol {
                out.push(RatioViolation {
                    good: i,
                    theta: theta.clone(),
                    other: other.clone(),
                    scaled_utility: a,
                    other_scaled_utility: b,
                });
            }
        }
    }
    out
}

fn uniform_simplex<R: Rng>(rng: &mut R, n: usize, skip: Option<usize>) -> Vec<f64> {
    let mut e: Vec<f64> = (0..n)
        .map(|k| {
            if Some(k) == skip {
                0.0
            } else {
                -(1.0 - rng.gen::<f64>()).ln()
            }
        })
        .collect();
    let total: f64 = e.iter().sum();
    e.iter_mut().for_each(|x| *x /= total);
    e
}

/// Random pairs `(theta, other)` with `theta` closer to some vertex than
/// `other`: `other` mixes `theta` with a point of the opposite face.
pub fn sample_ordered_pairs(n_goods: usize, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = stream_rng(seed, u64::MAX);
    (0..count)
        .map(|_| {
            let theta = uniform_simplex(&mut rng, n_goods, None);
            let i = rng.gen_range(0..n_goods);
            let face = uniform_simplex(&mut rng, n_goods, Some(i));
            let a: f64 = rng.gen();
            let other = theta.iter().zip(&face).map(|(t, f)| (1.0 - a) * t + a * f).collect();
            (theta, other)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotteryOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for LotteryOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-10,
            max_iters: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotteryOutcome {
    pub q: Vec<f64>,
    pub masses: Vec<f64>,
    pub iterations: usize,
}

/// Choice masses with exact ties split in proportion to `q`.
fn lottery_masses(gi: &GIntegrator, q: &[f64]) -> Vec<f64> {
    let Some(points) = gi.points() else {
        return gi.choice_integrals(q).masses;
    };
    let mut m = vec![0.0; q.len()];
    for i in 0..points.len() {
        let theta = points.theta(i);
        let best = theta.iter().zip(q).map(|(t, x)| t * x).fold(f64::MIN, f64::max);
        let tied: Vec<usize> = (0..q.len())
            .filter(|&j| theta[j] * q[j] >= best * (1.0 - 1e-12))
            .collect();
        let share: f64 = tied.iter().map(|&j| q[j]).sum();
        for &j in &tied {
            m[j] += points.weight(i) * q[j] / share;
        }
    }
    m
}

/// Damped best-response iteration `q <- (1 - a) q + a s / m(q)` of the
/// one-entry lottery game.
pub fn lottery_fixed_point(gi: &GIntegrator, s: &[f64], opts: &LotteryOptions) -> Result<LotteryOutcome> {
    crate::ceei::validate_supplies(s, gi.n_goods())?;
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Config("damping must lie in (0, 1]".into()));
    }
    let n = s.len();
    let mut q: Vec<f64> = s.iter().map(|x| n as f64 * x).collect();
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iters {
        let m = lottery_masses(gi, &q);
        let next: Vec<f64> = q
            .iter()
            .zip(&m)
            .zip(s)
            .map(|((qi, mi), si)| {
                // an unchosen good is infinitely generous; double it instead
                let target = if *mi > 0.0 { si / mi } else { 2.0 * qi };
                (1.0 - opts.damping) * qi + opts.damping * target
            })
            .collect();
        change = q
            .iter()
            .zip(&next)
            .map(|(a, b)| ((b - a) / a).abs())
            .fold(0.0, f64::max);
        q = next;
        if change <= opts.tol {
            let masses = lottery_masses(gi, &q);
            return Ok(LotteryOutcome {
                q,
                masses,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "lottery best-response iteration (try a smaller damping)".into(),
        iterations: opts.max_iters,
        residual: change,
        best: q,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackReport {
    pub max_bundle_total: f64,
    /// Every bundle sums to less than one unit.
    pub unit_demand_interpretable: bool,
}

pub fn unit_demand_slack(menu: &Menu) -> SlackReport {
    let max_bundle_total = menu.bundles().iter().map(|b| b.iter().sum::<f64>()).fold(0.0, f64::max);
    SlackReport {
        max_bundle_total,
        unit_demand_interpretable: max_bundle_total < 1.0,
    }
}
