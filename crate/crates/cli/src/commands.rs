use std::path::{Path, PathBuf};

use ceei_core::ceei::{ceei_menu, solve_ceei, CeeiOptions, CeeiSolution};
use ceei_core::certificate::{certify, CertificateReport, CertifyOptions};
use ceei_core::evaluator::{
    check_ratio_monotonicity, sample_ordered_pairs, simulate, unit_demand_slack, Menu, SlackReport, WelfareReport,
};
use ceei_core::shadow::{shadow_costs, ShadowCostReport, ShadowOptions, SwitchingMethod};
use ceei_core::simplex::GIntegrator;
use ceei_core::twogood::{
    optimize_z, two_option_optimality_condition, TwoGoodOptions, TwoGoodSolution, TwoOptionCondition,
};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};
use crate::report::{write_csv, write_json};

/// Ordered pairs sampled for the ratio-monotonicity check of a menu.
const IC_PAIRS: usize = 10_000;

#[derive(Debug, Serialize)]
pub struct Envelope<'a, T> {
    pub schema_version: u32,
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub result: T,
}

fn emit<T: Serialize>(cfg: &RunConfig, command: &str, result: T) -> CliResult<PathBuf> {
    let envelope = Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        config: cfg,
        result,
    };
    write_json(&cfg.output.dir, &format!("{command}.json"), &envelope)
}

fn ceei_options(cfg: &RunConfig) -> CeeiOptions {
    CeeiOptions {
        tol_grad: cfg.tolerances.tol_grad,
        tol_clear: cfg.tolerances.tol_clear,
        ..CeeiOptions::default()
    }
}

fn integrator(cfg: &RunConfig) -> CliResult<GIntegrator> {
    let model = cfg.model()?;
    Ok(GIntegrator::new(&model, cfg.mode, cfg.mc_samples, cfg.seed)?)
}

fn solve(cfg: &RunConfig, gi: &GIntegrator) -> CliResult<CeeiSolution> {
    Ok(solve_ceei(gi, &cfg.supplies, &ceei_options(cfg))?)
}

#[derive(Debug, Serialize)]
pub struct CeeiOutput {
    #[serde(flatten)]
    pub solution: CeeiSolution,
    pub menu: Menu,
}

pub fn ceei(cfg: &RunConfig) -> CliResult<(CeeiOutput, Vec<PathBuf>)> {
    let gi = integrator(cfg)?;
    let solution = solve(cfg, &gi)?;
    let out = CeeiOutput {
        menu: ceei_menu(&solution),
        solution,
    };
    let path = emit(cfg, "ceei", &out)?;
    Ok((out, vec![path]))
}

#[derive(Debug, Serialize)]
pub struct ShadowOutput {
    pub equilibrium: CeeiSolution,
    #[serde(flatten)]
    pub costs: ShadowCostReport,
}

pub fn shadow(cfg: &RunConfig) -> CliResult<(ShadowOutput, Vec<PathBuf>)> {
    let model = cfg.model()?;
    if cfg.shadow.method == Some(SwitchingMethod::Geometric) && model.n_goods() > 3 {
        return Err(ceei_core::Error::Unsupported("geometric method requires N ≤ 3".into()).into());
    }
    let gi = GIntegrator::new(&model, cfg.mode, cfg.mc_samples, cfg.seed)?;
    let equilibrium = solve(cfg, &gi)?;
    let opts = ShadowOptions {
        method: cfg.shadow.method,
        scaling: cfg.shadow.scaling,
        ..ShadowOptions::default()
    };
    let costs = shadow_costs(&model, &gi, &equilibrium.q, &opts)?;
    let out = ShadowOutput { equilibrium, costs };
    let path = emit(cfg, "shadow", &out)?;
    Ok((out, vec![path]))
}

pub fn certify_cmd(cfg: &RunConfig) -> CliResult<(CertificateReport, Vec<PathBuf>)> {
    let model = cfg.model()?;
    let opts = CertifyOptions {
        tail_grid_size: cfg.grids.tail_grid_size,
        rel_tol: cfg.tolerances.balance_tol,
        ratio_grid_size: cfg.grids.ratio_grid_size,
        ceei: ceei_options(cfg),
    };
    let report = certify(&model, &cfg.supplies, &opts)?;
    let path = emit(cfg, "certify", &report)?;
    Ok((report, vec![path]))
}

#[derive(Debug, Serialize)]
pub struct TwoGoodOutput {
    pub solution: TwoGoodSolution,
    pub two_option_condition: TwoOptionCondition,
}

pub fn twogood(cfg: &RunConfig) -> CliResult<(TwoGoodOutput, Vec<PathBuf>)> {
    let model = cfg.model()?;
    let opts = TwoGoodOptions {
        mode: cfg.mode,
        samples: cfg.mc_samples,
        seed: cfg.seed,
        z_grid_size: cfg.grids.z_grid_size,
        quadrature_tol: cfg.tolerances.stat_tol,
        ..TwoGoodOptions::default()
    };
    let solution = optimize_z(&model, &cfg.supplies, &opts)?;
    let condition = two_option_optimality_condition(
        &model,
        cfg.grids.k_grid_step,
        cfg.grids.ratio_grid_size,
        cfg.tolerances.stat_tol,
    )?;
    let rows: Vec<Vec<f64>> = solution.r_curve.iter().map(|p| vec![p.z, p.zeta, p.r]).collect();
    let out = TwoGoodOutput {
        solution,
        two_option_condition: condition,
    };
    let json = emit(cfg, "twogood", &out)?;
    let csv = write_csv(&cfg.output.dir, "twogood_curve.csv", &["z", "zeta", "r"], &rows)?;
    Ok((out, vec![json, csv]))
}

/// A menu file: a bare list of bundles or an object with bundles and labels.
#[derive(Deserialize)]
#[serde(untagged)]
enum MenuFile {
    Bundles(Vec<Vec<f64>>),
    Menu(Menu),
}

pub fn load_menu(path: &Path) -> CliResult<Menu> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let parsed: MenuFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("malformed menu {}: {e}", path.display())))?;
    match parsed {
        MenuFile::Bundles(b) => Menu::new(b).map_err(|e| CliError::Config(format!("malformed menu: {e}"))),
        MenuFile::Menu(m) => Ok(m),
    }
}

#[derive(Debug, Serialize)]
pub struct EvaluateOutput {
    pub menu: Menu,
    pub welfare: WelfareReport,
    pub ratio_pairs_checked: usize,
    pub ratio_violations: usize,
    pub slack: SlackReport,
}

pub fn evaluate(cfg: &RunConfig, menu_path: &Path) -> CliResult<(EvaluateOutput, Vec<PathBuf>)> {
    let menu = load_menu(menu_path)?;
    if menu.n_goods() != cfg.supplies.len() {
        return Err(CliError::Config(format!(
            "menu has {} goods but the config has {}",
            menu.n_goods(),
            cfg.supplies.len()
        )));
    }
    let model = cfg.model()?;
    let welfare = simulate(&model, &menu, cfg.mc_samples, cfg.seed, Some(&cfg.supplies))?;
    let pairs = sample_ordered_pairs(menu.n_goods(), IC_PAIRS, cfg.seed);
    let ratio_violations = check_ratio_monotonicity(&menu, &pairs, 1e-9).len();
    let out = EvaluateOutput {
        slack: unit_demand_slack(&menu),
        menu,
        welfare,
        ratio_pairs_checked: IC_PAIRS,
        ratio_violations,
    };
    let path = emit(cfg, "evaluate", &out)?;
    Ok((out, vec![path]))
}
