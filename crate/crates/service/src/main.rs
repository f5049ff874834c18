use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;
use twin_service::commands;
use twin_service::config::{EngineConfig, ServiceConfig};
use twin_service::report::{render_orders, render_status};

#[derive(Parser)]
#[command(name = "twin", version, about = "Lighting asset twin for a public library")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the evaluation loop and the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate synthetic telemetry for a scenario.
    Simulate {
        /// Scenario file.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the engine over a recorded telemetry file as fast as possible.
    Replay {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the building status and work orders held in a data log.
    Report {
        #[arg(long)]
        data: PathBuf,
        /// Asset file; the demo library when omitted.
        #[arg(long)]
        assets: Option<PathBuf>,
        /// Service config supplying assets and policies.
        #[arg(long, conflicts_with = "assets")]
        config: Option<PathBuf>,
    },
    /// Validate an asset configuration file.
    Validate {
        #[arg(long)]
        assets: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Serve { config } => {
            let config = ServiceConfig::load(&config)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(twin_service::server::serve(config))?;
        }
        Command::Simulate { config, seed, out } => {
            let events = commands::simulate(&config, seed)?;
            commands::write_events(&events, &out)?;
            println!("wrote {} events to {}", events.len(), out.display());
        }
        Command::Replay { data, config } => {
            let config = ServiceConfig::load(&config)?;
            let (summary, twin) = commands::replay(&config, &data)?;
            println!(
                "{} ticks, {} alarms, orders raised: {} CM, {} PdM, {} PM",
                summary.ticks, summary.alarms, summary.raised[0], summary.raised[1], summary.raised[2]
            );
            print!("{}", render_status(&twin.status()?));
        }
        Command::Report { data, assets, config } => {
            let (assets, engine) = match config {
                Some(path) => {
                    let cfg = ServiceConfig::load(&path)?;
                    (cfg.assets, cfg.engine)
                }
                None => (assets, EngineConfig::default()),
            };
            let (view, twin) = commands::report(&data, assets.as_deref(), engine)?;
            print!("{}", render_status(&view));
            println!();
            print!("{}", render_orders(&twin.list_orders(None)));
        }
        Command::Validate { assets } => {
            let text = std::fs::read_to_string(&assets).with_context(|| format!("reading {}", assets.display()))?;
            let doc = twin_core::asset::AssetConfigDocument::from_json(&text)?;
            let report = twin_core::asset::validate(&doc);
            if report.is_empty() {
                println!("{}: ok", assets.display());
            } else {
                for e in &report.violations {
                    println!("{e}");
                }
                anyhow::bail!("{} error(s)", report.violations.len());
            }
        }
    }
    Ok(())
}
