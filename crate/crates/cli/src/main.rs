use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use pffc_core::experiment::{self, ExperimentConfig, RawConfig};

/// Optimal control of space-time phase-field fracture.
#[derive(Parser, Debug)]
#[command(name = "pffc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run reduced Newton-CG for an experiment and write its artifacts.
    Run(Common),
    /// Run the derivative and consistency checks on a small configuration.
    Verify(Common),
    /// Finite-difference check of the reduced gradient.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Number of random directions.
        #[arg(long, default_value_t = 3)]
        directions: usize,
    },
    /// List the configuration keys.
    Keys,
}

#[derive(Args, Debug)]
struct Common {
    /// Base preset: example1, example2 or desk.
    #[arg(long)]
    preset: Option<String>,
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cells per side.
    #[arg(long)]
    mesh: Option<usize>,
    /// Number of time steps.
    #[arg(long)]
    timesteps: Option<usize>,
    /// Snapshot time indices, comma separated.
    #[arg(long)]
    snapshots: Option<String>,
    /// Sequential, bit-reproducible linear algebra.
    #[arg(long)]
    reproducible: bool,
    /// Any other key, as `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn resolve(&self, default_preset: &str) -> pffc_core::Result<ExperimentConfig> {
        let preset = self
            .preset
            .as_deref()
            .or(if self.config.is_none() { Some(default_preset) } else { None });
        let mut raw: RawConfig = experiment::raw_config(preset, self.config.as_deref())?;
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| pffc_core::Error::ConfigParse {
                path: "--set".into(),
                line: 1,
                reason: format!("expected KEY=VALUE, got `{kv}`"),
            })?;
            raw.set(k.trim(), v.trim())?;
        }
        if let Some(out) = &self.out {
            raw.set("out_dir", out.display().to_string())?;
        }
        if let Some(n) = self.mesh {
            raw.set("mesh", n.to_string())?;
        }
        if let Some(m) = self.timesteps {
            raw.set("timesteps", m.to_string())?;
        }
        if let Some(s) = &self.snapshots {
            raw.set("snapshots", s.clone())?;
        }
        if self.reproducible {
            raw.set("reproducible", "true")?;
        }
        ExperimentConfig::from_raw(&raw)
    }
}

fn run(cli: Cli) -> pffc_core::Result<bool> {
    match cli.command {
        Command::Run(common) => {
            let config = common.resolve("example1")?;
            let outcome = experiment::run_experiment(&config)?;
            for r in &outcome.records {
                println!(
                    "{:>3} cg {:>3} rel {:.4e} abs {:.4e} cost {:.6e} max_force {:.2}",
                    r.iter, r.cg_count, r.rel_residual, r.abs_residual, r.cost, r.max_force
                );
            }
            println!("status: {}", outcome.status);
            println!("artifacts: {}", outcome.out_dir.display());
            Ok(outcome.success())
        }
        Command::Verify(common) => {
            let config = common.resolve("desk")?;
            let report = experiment::run_verification(&config)?;
            print!("{}", report.render());
            info!("report written to {}", report.path.display());
            Ok(report.all_passed())
        }
        Command::Gradcheck { common, directions } => {
            let config = common.resolve("desk")?;
            let reports = experiment::run_gradcheck(&config, directions)?;
            let mut ok = true;
            for (k, r) in reports.iter().enumerate() {
                let pass = r.passes(experiment::tolerances::GRADIENT_FD, None);
                ok &= pass;
                println!(
                    "direction {k}: {} min rel error {:.3e} order {}",
                    if pass { "PASS" } else { "FAIL" },
                    r.min_rel_error,
                    r.order.map_or("n/a".to_string(), |p| format!("{p:.2}"))
                );
                for (h, e) in r.steps.iter().zip(&r.errors) {
                    println!("  h {h:.1e} rel error {e:.3e}");
                }
            }
            Ok(ok)
        }
        Command::Keys => {
            for (k, d) in experiment::KEYS {
                println!("{k:<18} {d}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
