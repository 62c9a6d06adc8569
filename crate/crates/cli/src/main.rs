//! Command-line front end: `malcom run|compare|diagnose --config PATH`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use malcom::harness::{self, ExperimentConfig};
use malcom::protocol::Compressor;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "malcom",
    version,
    about = "Compressed decentralized proximal SGD simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv, config.json, summary.json.
    Run(Common),
    /// Run every codec on the same experiment and report bits to a cutoff.
    Compare(Common),
    /// Run with the malcom codec and write per-round rate diagnostics.
    Diagnose(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (overrides the config).
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn resolve(&self) -> malcom::Result<(ExperimentConfig, PathBuf)> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(threads) = self.threads {
            config.threads = threads;
        }
        let out = self
            .out
            .clone()
            .or_else(|| config.output.clone())
            .unwrap_or_else(|| PathBuf::from("malcom-out"));
        Ok((config, out))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MALCOM_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!(
                "{}",
                json!({"status": "error", "kind": e.kind(), "message": e.to_string()})
            );
            ExitCode::FAILURE
        }
    }
}

fn execute(command: &Command) -> malcom::Result<serde_json::Value> {
    match command {
        Command::Run(args) => {
            let (config, out) = args.resolve()?;
            let artifact = harness::run(&config, &out)?;
            Ok(json!({
                "status": "ok",
                "out": out,
                "summary": artifact.summary,
            }))
        }
        Command::Compare(args) => {
            let (config, out) = args.resolve()?;
            let comparison = harness::compare_codecs(&config, &out)?;
            Ok(json!({"status": "ok", "out": out, "comparison": comparison}))
        }
        Command::Diagnose(args) => {
            let (mut config, out) = args.resolve()?;
            config.codec = Compressor::Malcom;
            let artifact = harness::run(&config, &out)?;
            let rows = harness::rate_diagnostics(&artifact)?;
            let path = out.join("rate.csv");
            harness::write_rate_csv(&rows, &path)?;
            Ok(json!({
                "status": "ok",
                "out": out,
                "rate_csv": display(&path),
                "mean_bits_per_coord": mean(rows.iter().map(|r| r.bits_per_coord)),
                "mean_type_bound": mean(rows.iter().map(|r| r.type_bound)),
            }))
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
