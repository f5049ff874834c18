//! Batch operations behind the `simulate`, `replay` and `report` subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use twin_core::eventlog::{read_events, write_jsonl, EventLog, LogEvent};
use twin_core::sim::{generate, Scenario};
use twin_core::workorder::WorkOrderKind;

use crate::config::{load_assets, EngineConfig, ServiceConfig};
use crate::engine::{align_up, drive, FeedCursor, StatusView, TwinState};

pub fn load_scenario(path: &Path) -> anyhow::Result<(Scenario, Option<PathBuf>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario: Scenario = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let assets = scenario.assets.as_ref().map(|a| base.join(a));
    Ok((scenario, assets))
}

/// Generates the scenario's telemetry, optionally with a different seed.
pub fn simulate(scenario_path: &Path, seed: Option<u64>) -> anyhow::Result<Vec<LogEvent>> {
    let (mut scenario, assets) = load_scenario(scenario_path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let tree = load_assets(assets.as_deref())?;
    Ok(generate(&scenario, &tree)?)
}

pub fn write_events(events: &[LogEvent], out: &Path) -> anyhow::Result<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let file = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_jsonl(events, std::io::BufWriter::new(file))?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplaySummary {
    pub ticks: usize,
    pub alarms: usize,
    pub raised: [usize; 3],
}

/// Runs the engine over a telemetry file as fast as possible, continuing from the service's
/// data log and appending to it.
pub fn replay(config: &ServiceConfig, data: &Path) -> anyhow::Result<(ReplaySummary, TwinState)> {
    let tree = Arc::new(config.load_tree()?);
    config.engine.check(&tree)?;
    let mut twin = TwinState::restore(tree, config.engine.clone(), read_events(&config.data_log)?)?
        .with_log(EventLog::open(&config.data_log)?);
    let mut feed = FeedCursor::new(read_events(data)?);
    let (Some(first), Some(last)) = (feed.first_ts(), feed.last_ts()) else {
        return Ok((ReplaySummary::default(), twin));
    };
    let interval = config.engine.interval();
    let start = align_up(twin.as_of().map_or(first, |t| t.max(first)), interval);
    let mut summary = ReplaySummary::default();
    drive(&mut twin, &mut feed, start, last + interval, |state, tick| {
        summary.ticks += 1;
        summary.alarms += tick.new_alarms.len();
        for id in &tick.raised {
            if let Some(o) = state.orders().get(id) {
                let slot = match o.kind {
                    WorkOrderKind::CM => 0,
                    WorkOrderKind::PdM => 1,
                    WorkOrderKind::PM => 2,
                };
                summary.raised[slot] += 1;
            }
        }
    })?;
    Ok((summary, twin))
}

/// Rebuilds state from a log file and returns its status view.
pub fn report(data: &Path, assets: Option<&Path>, engine: EngineConfig) -> anyhow::Result<(StatusView, TwinState)> {
    let tree = Arc::new(load_assets(assets)?);
    engine.check(&tree)?;
    let twin = TwinState::restore(tree, engine, read_events(data)?)?;
    Ok((twin.status()?, twin))
}
