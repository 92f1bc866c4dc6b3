use std::path::PathBuf;
use std::process::ExitCode;

use ceei_core::simplex::IntegrationMode;
use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;
mod report;
mod reproduce;

use config::{Overrides, RunConfig};
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "ceei",
    version,
    about = "Equal-income equilibria and optimal menus without money"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for reports.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured Monte Carlo sample count.
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Quadrature,
    Mc,
    Auto,
}

impl From<ModeArg> for IntegrationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Quadrature => IntegrationMode::Quadrature,
            ModeArg::Mc => IntegrationMode::MonteCarlo,
            ModeArg::Auto => IntegrationMode::Auto,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve for market-clearing prices.
    Ceei,
    /// Shadow costs of supply at the equilibrium.
    Shadow,
    /// Check whether the equilibrium menu is optimal.
    Certify,
    /// Optimize the symmetric two-good menu.
    Twogood,
    /// Simulate a menu given as JSON.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        menu: PathBuf,
    },
    /// Rerun the worked examples and compare with reference values.
    ReproduceExamples,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            samples: self.samples,
            mode: self.mode.map(Into::into),
        }
    }

    fn load_config(&self) -> CliResult<RunConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs --config PATH".into()))?;
        let mut cfg = RunConfig::load(path)?;
        cfg.apply(&self.overrides());
        cfg.validate()?;
        Ok(cfg)
    }
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn reproduce_examples(cli: &Cli) -> CliResult<()> {
    let samples = cli.samples.unwrap_or(1_000_000);
    if samples < 1000 {
        return Err(CliError::Config("mc_samples must be at least 1000".into()));
    }
    let summary = reproduce::run(samples, cli.seed.unwrap_or(0));
    for row in &summary.rows {
        println!(
            "{} {:>2} {}",
            if row.passed { "PASS" } else { "FAIL" },
            row.id,
            row.name
        );
        for c in row.checks.iter().filter(|c| !c.passed) {
            println!(
                "       failed: {} (value {:?}, reference {:?})",
                c.label, c.value, c.reference
            );
        }
    }
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    announce(&[report::write_json(&dir, "reproduce.json", &summary)?]);
    if summary.failed > 0 {
        return Err(CliError::Acceptance(summary.failed));
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::ReproduceExamples => reproduce_examples(cli),
        Command::Ceei => commands::ceei(&cli.load_config()?).map(|(_, p)| announce(&p)),
        Command::Shadow => commands::shadow(&cli.load_config()?).map(|(_, p)| announce(&p)),
        Command::Certify => commands::certify_cmd(&cli.load_config()?).map(|(_, p)| announce(&p)),
        Command::Twogood => commands::twogood(&cli.load_config()?).map(|(_, p)| announce(&p)),
        Command::Evaluate { menu } => commands::evaluate(&cli.load_config()?, menu).map(|(_, p)| announce(&p)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
