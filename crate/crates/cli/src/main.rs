use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use depthvar::commands;
use depthvar::config::Config;
use depthvar::CliError;

#[derive(Parser)]
#[command(name = "depthvar", version, about = "Dynamic-depth inference on a toy multi-scale transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seed list (run.seeds).
    #[arg(long)]
    seeds: Option<String>,
    /// Override any config key, e.g. scheduler.eta=0.7. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (run.out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline per seed and write reports, metrics and images.
    Generate(Common),
    /// Sweep one configuration axis against the dense reference.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Axis to sweep (ablate.axis).
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated axis values (ablate.values).
        #[arg(long)]
        values: Option<String>,
    },
    /// Layer-similarity and forced early-exit curves of the dense pipeline.
    Probe(Common),
}

fn overrides(common: &Common, extra: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut items = common.set.clone();
    if let Some(seeds) = &common.seeds {
        let parsed = seeds
            .split(',')
            .map(|s| s.trim().parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Config(format!("--seeds `{seeds}` is not a comma-separated list of integers")))?;
        let list: Vec<String> = parsed.iter().map(u64::to_string).collect();
        items.push(format!("run.seeds=[{}]", list.join(",")));
    }
    if let Some(out) = &common.out {
        items.push(format!("run.out={}", toml::Value::String(out.display().to_string())));
    }
    items.extend(extra);
    Ok(items)
}

fn load(common: &Common, extra: Vec<String>) -> Result<Config, CliError> {
    Config::load(common.config.as_deref(), &overrides(common, extra)?)
}

fn quoted_list(raw: &str) -> String {
    let items: Vec<String> = raw
        .split(',')
        .map(|v| toml::Value::String(v.trim().to_string()).to_string())
        .collect();
    format!("[{}]", items.join(","))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(common) => {
            let cfg = load(&common, Vec::new())?;
            for (seed, speedup, ssim) in commands::generate(&cfg)? {
                println!("seed {seed}: speedup {speedup:.4}, final ssim {ssim:.4}");
            }
        }
        Command::Ablate { common, axis, values } => {
            let mut extra = Vec::new();
            if let Some(axis) = axis {
                extra.push(format!("ablate.axis={}", toml::Value::String(axis)));
            }
            if let Some(values) = values {
                extra.push(format!("ablate.values={}", quoted_list(&values)));
            }
            let cfg = load(&common, extra)?;
            let rows = commands::ablate(&cfg)?;
            for row in rows.iter().filter(|r| r.seed == "mean" && r.scale + 1 == cfg.model.scales.len()) {
                println!(
                    "{}={}: speedup {:.4}, final ssim {:.4}",
                    row.axis, row.value, row.speedup, row.feature_ssim
                );
            }
        }
        Command::Probe(common) => {
            let cfg = load(&common, Vec::new())?;
            let (sim, exit) = commands::probe(&cfg)?;
            println!("{} similarity rows, {} early-exit rows", sim.len(), exit.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
