//! Run configuration, read from a single TOML document.

use std::path::{Path, PathBuf};

use ceei_core::model::{Family, RenormalizedModel, ValueModel};
use ceei_core::shadow::{InterfaceScaling, SwitchingMethod};
use ceei_core::simplex::IntegrationMode;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub distribution: Family,
    pub supplies: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub mode: IntegrationMode,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub shadow: ShadowSettings,
    #[serde(default)]
    pub output: Output,
}

fn default_mc_samples() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Unset picks the backend default.
    pub tol_grad: Option<f64>,
    pub tol_clear: f64,
    /// Relative to total variation.
    pub balance_tol: f64,
    /// Quadrature tolerance for two-good comparisons; sampled runs use 3 SE.
    pub stat_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_grad: None,
            tol_clear: 1e-3,
            balance_tol: 1e-6,
            stat_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    pub z_grid_size: usize,
    pub tail_grid_size: usize,
    pub k_grid_step: f64,
    pub ratio_grid_size: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            z_grid_size: 2001,
            tail_grid_size: 2001,
            k_grid_step: 0.005,
            ratio_grid_size: 2001,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShadowSettings {
    pub method: Option<SwitchingMethod>,
    pub scaling: InterfaceScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub mode: Option<IntegrationMode>,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dir) = &o.out {
            self.output.dir = dir.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(n) = o.samples {
            self.mc_samples = n;
        }
        if let Some(mode) = o.mode {
            self.mode = mode;
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.supplies.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(CliError::Config("supplies must be strictly positive".into()));
        }
        if self.mc_samples < 1000 {
            return Err(CliError::Config("mc_samples must be at least 1000".into()));
        }
        for (name, size) in [
            ("z_grid_size", self.grids.z_grid_size),
            ("tail_grid_size", self.grids.tail_grid_size),
            ("ratio_grid_size", self.grids.ratio_grid_size),
        ] {
            if size < 11 {
                return Err(CliError::Config(format!("{name} must be at least 11")));
            }
        }
        let step = self.grids.k_grid_step;
        if !(step > 0.0 && step <= 0.1) {
            return Err(CliError::Config("k_grid_step must lie in (0, 0.1]".into()));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tol_clear", t.tol_clear),
            ("balance_tol", t.balance_tol),
            ("stat_tol", t.stat_tol),
            ("tol_grad", t.tol_grad.unwrap_or(1.0)),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("{name} must be positive")));
            }
        }
        let model = self.value_model()?;
        if model.n_goods() != self.supplies.len() {
            return Err(CliError::Config(format!(
                "distribution has {} goods but {} supplies were given",
                model.n_goods(),
                self.supplies.len()
            )));
        }
        Ok(())
    }

    pub fn value_model(&self) -> CliResult<ValueModel> {
        ValueModel::new(self.distribution.clone()).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn model(&self) -> CliResult<RenormalizedModel> {
        Ok(RenormalizedModel::new(self.value_model()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
supplies = [0.1, 0.1]

[distribution]
family = "uniform_square"
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.mc_samples, 1_000_000);
        assert_eq!(cfg.grids.z_grid_size, 2001);
        assert_eq!(cfg.mode, IntegrationMode::Auto);
    }

    #[test]
    fn nested_families_parse() {
        let text = r#"
schema_version = 1
supplies = [0.1, 0.1, 0.1]
mode = "mc"

[distribution]
family = "iid"
n_goods = 3
marginal = { kind = "power", exponent = 2.0 }
"#;
        let cfg = RunConfig::parse(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.mode, IntegrationMode::MonteCarlo);
    }

    #[test]
    fn validation_failures() {
        let mut cfg = RunConfig::parse(MINIMAL).unwrap();
        cfg.supplies = vec![-1.0, 0.1];
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("supplies must be strictly positive"));
        let mut cfg = RunConfig::parse(MINIMAL).unwrap();
        cfg.mc_samples = 10;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::parse(MINIMAL).unwrap();
        cfg.grids.z_grid_size = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::parse(MINIMAL).unwrap();
        cfg.supplies = vec![0.1, 0.1, 0.1];
        assert!(cfg.validate().is_err());
        assert!(RunConfig::parse("schema_version = 1\nsupplies = [1.0]\nbogus = 3\n").is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::parse(MINIMAL).unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            samples: Some(5000),
            mode: Some(IntegrationMode::Quadrature),
            out: Some(PathBuf::from("elsewhere")),
        });
        assert_eq!((cfg.seed, cfg.mc_samples), (9, 5000));
        assert_eq!(cfg.output.dir, PathBuf::from("elsewhere"));
    }
}
