use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ppfpf::harness::{
    config_reference, parse_config, run_experiment, run_oracle_only, write_artifacts, ExperimentConfig,
    ExperimentReport, Preset, RunStatus,
};
use ppfpf::Error;

/// Point-process feedback particle filter experiments.
#[derive(Parser)]
#[command(name = "ppfpf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured filter and write metrics, trajectories and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run only the grid oracle on the configured streams.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the built-in preset configs.
    Presets,
    /// Print every config key with its default.
    ConfigReference,
}

const DEFAULT_OUT: &str = "out";

fn load(config: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Error> {
    let mut cfg = parse_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn print_summary(report: &ExperimentReport, dir: &Path) {
    println!("{:>4} {:>6} {:<6} {:>8} {:>12} {:>12} {:>12} {:>12} {:>9}", "run", "seed", "filter", "status", "mse", "variance", "d_mean", "d_var", "seconds");
    for row in report.rows() {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.5}"));
        let m = row.metrics;
        println!(
            "{:>4} {:>6} {:<6} {:>8} {:>12} {:>12} {:>12} {:>12} {:>9.2}",
            row.run,
            row.seed,
            row.filter,
            match row.status {
                RunStatus::Ok => "ok",
                RunStatus::Failed => "failed",
            },
            fmt(m.map(|m| m.mse)),
            fmt(m.map(|m| m.mean_variance)),
            fmt(m.and_then(|m| m.oracle_mean_error)),
            fmt(m.and_then(|m| m.oracle_var_error)),
            row.wall_seconds,
        );
        if let Some(e) = &row.error {
            println!("     error: {e}");
        }
    }
    println!("wrote {}", dir.display());
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let dir = out_dir(&cfg, out);
            let report = run_experiment(&cfg)?;
            write_artifacts(&report, &dir)?;
            print_summary(&report, &dir);
        }
        Command::Oracle { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let dir = out_dir(&cfg, out);
            let report = run_oracle_only(&cfg)?;
            write_artifacts(&report, &dir)?;
            println!("wrote {}", dir.display());
        }
        Command::Presets => {
            for (i, preset) in Preset::ALL.into_iter().enumerate() {
                if i > 0 {
                    println!();
                }
                println!("# --- {} ---", preset.name());
                print!("{}", ExperimentConfig::preset(preset, 1).to_toml());
            }
        }
        Command::ConfigReference => print!("{}", config_reference()),
    }
    Ok(())
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprintln!("{}", error_json("usage", e.to_string().trim_end()));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            match e {
                Error::Parse(_) | Error::Validation(_) | Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
