//! Experiment runner: builds a configuration from a preset or a JSON file,
//! evaluates it, writes a CSV plus a JSON sidecar and re-checks the CSV.

pub mod analysis;
pub mod config;
pub mod output;
pub mod presets;

use std::path::PathBuf;

use clap::Parser;
use serde_json::Value;
use thiserror::Error;

pub use analysis::{run_analysis, Table};
pub use config::{validate, Command, ExperimentConfig, Preset, Violation};
pub use presets::preset;

#[derive(Debug, Parser)]
#[command(name = "coopsense", version, about = "Cooperative spectrum sensing experiments")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// CSV destination; the sidecar goes next to it with a `.json` extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<u64>,
    /// Worker threads. Output does not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration is invalid")]
    Invalid(Vec<Violation>),
    #[error("cannot read configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] coopsense::Error),
    #[error("emitted CSV failed verification: {0:?}")]
    Verification(Vec<String>),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for anything the user can fix in the configuration, 3 for numerical
    /// failures (including a failed verification), 1 for i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Invalid(_) | Self::Config(_) => 2,
            Self::Core(e) => match e {
                coopsense::Error::Quadrature(_)
                | coopsense::Error::Numerical(_)
                | coopsense::Error::IterationLimit(_) => 3,
                _ => 2,
            },
            Self::Verification(_) => 3,
            Self::Io(_) => 1,
        }
    }

    pub fn to_json(&self) -> String {
        let kind = match self {
            Self::Invalid(_) | Self::Config(_) => "validation",
            Self::Core(_) if self.exit_code() == 2 => "validation",
            Self::Core(_) | Self::Verification(_) => "numerical",
            Self::Io(_) => "io",
        };
        let violations: Vec<Value> = match self {
            Self::Invalid(v) => v.iter().map(|v| serde_json::to_value(v).unwrap_or(Value::Null)).collect(),
            Self::Verification(v) => v.iter().map(|s| Value::String(s.clone())).collect(),
            _ => Vec::new(),
        };
        output::error_json(kind, self.exit_code(), &self.to_string(), &violations)
    }
}

/// What a successful run wrote.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub csv: PathBuf,
    pub sidecar: PathBuf,
    pub rows: usize,
}

/// Resolves the configuration named on the command line, with flag overrides.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut config = match (cli.preset.filter(|p| *p != Preset::None), &cli.config) {
        (Some(_), Some(_)) => {
            return Err(CliError::Invalid(vec![Violation {
                code: "config.conflict",
                message: "give either --preset or --config, not both".into(),
            }]))
        }
        (Some(p), None) => {
            if cli.command != Command::Sweep {
                return Err(CliError::Invalid(vec![Violation {
                    code: "preset.command",
                    message: "presets are sweeps; run them with the sweep command".into(),
                }]));
            }
            preset(p).expect("named preset")
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let mut c = ExperimentConfig::from_json(&text).map_err(|e| CliError::Config(e.to_string()))?;
            c.command = cli.command;
            c
        }
        (None, None) => {
            return Err(CliError::Invalid(vec![Violation {
                code: "config.missing",
                message: "give --preset or --config".into(),
            }]))
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    if let Some(out) = &cli.out {
        config.output = Some(out.clone());
    }
    Ok(config)
}

fn default_output(config: &ExperimentConfig) -> PathBuf {
    let stem = match config.preset {
        Preset::Fig3 => "fig3",
        Preset::Fig4 => "fig4",
        Preset::Fig5 => "fig5",
        Preset::None => match config.command {
            Command::AvgError => "avg-error",
            Command::Optimize => "optimize",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
        },
    };
    PathBuf::from(format!("{stem}.csv"))
}

/// Validates, evaluates and emits a configuration.
pub fn run_config(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let violations = validate(config);
    if !violations.is_empty() {
        return Err(CliError::Invalid(violations));
    }
    let table = run_analysis(config)?;
    let csv = config.output.clone().unwrap_or_else(|| default_output(config));
    output::write_csv(&csv, &table)?;
    let report = output::verify_csv(&csv, table.analysis)?;
    let sidecar = output::sidecar_path(&csv);
    output::write_sidecar(&sidecar, config, &table, &report)?;
    if !report.passed() {
        return Err(CliError::Verification(report.violations));
    }
    Ok(RunReport {
        csv,
        sidecar,
        rows: table.rows.len(),
    })
}

pub fn execute(cli: &Cli) -> Result<RunReport, CliError> {
    let config = resolve_config(cli)?;
    match cli.workers {
        Some(0) => Err(CliError::Invalid(vec![Violation {
            code: "workers.positive",
            message: "at least one worker is required".into(),
        }])),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(|| run_config(&config)),
        None => run_config(&config),
    }
}
