//! Shadow costs of supply at the clearing point.
//!
//! With region masses `M`, value moments `A` and switching densities `T`,
//! the costs solve `J c = A` where `J_ii = M_i + q_i sum_j T_ij` and
//! `J_ij = -q_j T_ij`. Row `i` states that raising `q_i` slightly is
//! welfare-neutral once supply is priced at `c`.
//!
//! `T_ij` is the rate at which mass leaves region `j` for region `i` as
//! `q_i` grows, i.e. `-dM_j/dq_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RenormalizedModel;
use crate::numeric::{gl64, pieces, Lu};
use crate::simplex::{indifference_type, ChoiceIntegrals, GIntegrator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchingMethod {
    /// Interface integral of `g theta_i`.
    Geometric,
    /// Central differences of region masses.
    FiniteDifference,
}

/// How the barycentric density `g` is read as a density on an interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceScaling {
    /// `g / sqrt(N)` against length on the embedded simplex; equals `-dM_j/dq_i`.
    #[default]
    Intrinsic,
    /// `g` itself against embedded length, which is `sqrt(N)` times larger.
    Embedded,
}

impl InterfaceScaling {
    fn factor(self, n_goods: usize) -> f64 {
        match self {
            InterfaceScaling::Intrinsic => 1.0 / (n_goods as f64).sqrt(),
            InterfaceScaling::Embedded => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowOptions {
    /// Defaults to geometric for N ≤ 3 and finite differences above.
    pub method: Option<SwitchingMethod>,
    pub scaling: InterfaceScaling,
    /// Relative step for finite differences.
    pub fd_step: f64,
}

impl Default for ShadowOptions {
    fn default() -> Self {
        Self {
            method: None,
            scaling: InterfaceScaling::Intrinsic,
            fd_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowCostReport {
    pub q: Vec<f64>,
    /// Region masses.
    pub m: Vec<f64>,
    /// `∫_{Γ_i} theta_i lambda dG`.
    pub a: Vec<f64>,
    pub t: Vec<Vec<f64>>,
    pub j: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub diag_dominance_margin: f64,
    pub condition_number: f64,
    /// `A - J c`, the per-good first-order welfare effect.
    pub row_residuals: Vec<f64>,
    pub method: SwitchingMethod,
    pub scaling: InterfaceScaling,
    pub integration_error: f64,
}

pub fn region_moments(gi: &GIntegrator, q: &[f64]) -> ChoiceIntegrals {
    gi.choice_integrals(q)
}

fn check_q(q: &[f64]) -> Result<()> {
    if q.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Domain("affordable quantities must be strictly positive".into()));
    }
    Ok(())
}

/// Switching densities `T` (zero diagonal).
pub fn switching_densities(
    model: &RenormalizedModel,
    gi: &GIntegrator,
    q: &[f64],
    method: SwitchingMethod,
    scaling: InterfaceScaling,
    fd_step: f64,
) -> Result<Vec<Vec<f64>>> {
    check_q(q)?;
    let n = q.len();
    match method {
        SwitchingMethod::Geometric => match n {
            2 | 3 => Ok(geometric(model, q, scaling)),
            _ => Err(Error::Unsupported("geometric method requires N ≤ 3".into())),
        },
        SwitchingMethod::FiniteDifference => {
            let mut t = vec![vec![0.0; n]; n];
            for i in 0..n {
                let h = fd_step * q[i];
                let mut up = q.to_vec();
                let mut dn = q.to_vec();
                up[i] += h;
                dn[i] -= h;
                let mu = gi.choice_integrals(&up).masses;
                let md = gi.choice_integrals(&dn).masses;
                for j in (0..n).filter(|&j| j != i) {
                    t[i][j] = -(mu[j] - md[j]) / (2.0 * h);
                }
            }
            Ok(t)
        }
    }
}

fn geometric(model: &RenormalizedModel, q: &[f64], scaling: InterfaceScaling) -> Vec<Vec<f64>> {
    let n = q.len();
    let scale = scaling.factor(n);
    let theta0 = indifference_type(q);
    let mut t = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let norm = (q[i] * q[i] + q[j] * q[j] - (q[i] - q[j]).powi(2) / n as f64).sqrt();
            let integral = if n == 2 {
                model.g(&theta0) * theta0[i]
            } else {
                segment_integral(model, &theta0, q, i, j)
            };
            t[i][j] = scale * integral / norm;
        }
    }
    t
}

/// `∫ g theta_i dσ` over the interface between regions `i` and `j` (three
/// goods): the segment from the indifference type to the face `theta_k = 0`.
fn segment_integral(model: &RenormalizedModel, theta0: &[f64], q: &[f64], i: usize, j: usize) -> f64 {
    let k = 3 - i - j;
    let mut end = [0.0; 3];
    end[i] = q[j] / (q[i] + q[j]);
    end[j] = q[i] / (q[i] + q[j]);
    end[k] = 0.0;
    let dir: Vec<f64> = (0..3).map(|a| end[a] - theta0[a]).collect();
    let length = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    let at = |tau: f64| -> [f64; 3] {
        [
            theta0[0] + tau * dir[0],
            theta0[1] + tau * dir[1],
            theta0[2] + tau * dir[2],
        ]
    };
    // g kinks where two coordinates reach the support box together
    let upper = model.base().support_upper();
    let mut breaks = Vec::new();
    for a in 0..3 {
        for b in a + 1..3 {
            let f0 = theta0[a] / upper[a] - theta0[b] / upper[b];
            let df = dir[a] / upper[a] - dir[b] / upper[b];
            if df != 0.0 {
                breaks.push(-f0 / df);
            }
        }
    }
    let rule = gl64();
    pieces(0.0, 1.0, &breaks)
        .into_iter()
        .map(|(lo, hi)| {
            rule.integrate(lo, hi, |tau| {
                let p = at(tau);
                model.g(&p) * p[i]
            })
        })
        .sum::<f64>()
        * length
}

pub fn assemble_j(m: &[f64], t: &[Vec<f64>], q: &[f64]) -> Vec<Vec<f64>> {
    let n = m.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        m[i] + q[i] * (0..n).filter(|&k| k != i).map(|k| t[i][k]).sum::<f64>()
                    } else {
                        -q[j] * t[i][j]
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowSolve {
    pub c: Vec<f64>,
    /// `min_i (H_ii - sum_j |H_ij|)` for `H = J diag(1/q)`.
    pub diag_dominance_margin: f64,
    pub condition_number: f64,
}

/// Solves `J c = A` and checks the positivity certificate.
pub fn solve_shadow_costs(j: &[Vec<f64>], a: &[f64], q: &[f64]) -> Result<ShadowSolve> {
    let lu = Lu::factor(j)?;
    let c = lu.solve(a);
    let n = a.len();
    let diag_dominance_margin = (0..n)
        .map(|i| {
            let off: f64 = (0..n).filter(|&k| k != i).map(|k| (j[i][k] / q[k]).abs()).sum();
            j[i][i] / q[i] - off
        })
        .fold(f64::INFINITY, f64::min);
    if let Some((i, ci)) = c.iter().enumerate().find(|(_, &ci)| !(ci > 0.0)) {
        return Err(Error::Invariant(format!(
            "shadow cost c[{i}] = {ci:.6e} is not positive"
        )));
    }
    Ok(ShadowSolve {
        condition_number: lu.condition_inf(j),
        c,
        diag_dominance_margin,
    })
}

/// Full pipeline at affordable quantities `q`.
pub fn shadow_costs(
    model: &RenormalizedModel,
    gi: &GIntegrator,
    q: &[f64],
    opts: &ShadowOptions,
) -> Result<ShadowCostReport> {
    check_q(q)?;
    let n = q.len();
    let method = opts.method.unwrap_or(if n <= 3 {
        SwitchingMethod::Geometric
    } else {
        SwitchingMethod::FiniteDifference
    });
    let ci = region_moments(gi, q);
    let t = switching_densities(model, gi, q, method, opts.scaling, opts.fd_step)?;
    let j = assemble_j(&ci.masses, &t, q);
    let solved = solve_shadow_costs(&j, &ci.moments, q)?;
    let row_residuals = (0..n)
        .map(|i| ci.moments[i] - (0..n).map(|k| j[i][k] * solved.c[k]).sum::<f64>())
        .collect();
    let integration_error = ci
        .mass_errors
        .iter()
        .chain(&ci.moment_errors)
        .fold(0.0, |a: f64, &b| a.max(b));
    Ok(ShadowCostReport {
        q: q.to_vec(),
        m: ci.masses,
        a: ci.moments,
        t,
        j,
        c: solved.c,
        diag_dominance_margin: solved.diag_dominance_margin,
        condition_number: solved.condition_number,
        row_residuals,
        method,
        scaling: opts.scaling,
        integration_error,
    })
}
