//! Wires configuration, state restoration, the tick loop and the HTTP server together.

use std::sync::Arc;

use anyhow::Context;
use chrono::Duration;
use twin_core::eventlog::{read_events, EventLog};
use twin_core::timefmt::Timestamp;

use crate::api::{router, AppState};
use crate::clock::Clock;
use crate::config::{ClockMode, ServiceConfig};
use crate::engine::{align_up, EngineError, EvaluationTick, FeedCursor, TwinState};

/// A restored twin with its clock, ready to tick.
pub struct Service {
    pub app: AppState,
    pub feed: FeedCursor,
    pub interval: Duration,
    pub next_tick: Timestamp,
}

impl Service {
    /// Restores state from the data log and opens it for appending.
    pub fn build(config: &ServiceConfig) -> anyhow::Result<Self> {
        let tree = Arc::new(config.load_tree()?);
        config.engine.check(&tree)?;
        let events = read_events(&config.data_log)?;
        let restored = events.len();
        let twin = TwinState::restore(tree, config.engine.clone(), events)
            .with_context(|| format!("replaying {}", config.data_log.display()))?
            .with_log(EventLog::open(&config.data_log)?);
        tracing::info!(events = restored, log = %config.data_log.display(), "state restored");

        let feed = match &config.feed {
            Some(path) => FeedCursor::new(read_events(path)?),
            None => FeedCursor::default(),
        };
        let interval = config.engine.interval();
        let resume = twin.as_of();
        let clock = match &config.clock {
            ClockMode::Realtime => Clock::Realtime,
            ClockMode::Simulated { start, speedup } => {
                let origin = resume.map_or(*start, |t| t.max(*start));
                match speedup {
                    Some(s) => Clock::scaled(origin, *s),
                    None => Clock::stepped(origin),
                }
            }
        };
        let next_tick = align_up(clock.now(), interval);
        Ok(Self { app: AppState::new(twin, clock), feed, interval, next_tick })
    }

    /// Releases due feed events and evaluates one tick at `ts`.
    pub fn step(&mut self, ts: Timestamp) -> Result<EvaluationTick, EngineError> {
        let released = self.feed.release(ts).to_vec();
        if !released.is_empty() {
            let mut twin = self.app.write();
            for event in released {
                if let Err(e) = twin.ingest(event) {
                    tracing::warn!(error = %e, "feed event rejected");
                }
            }
        }
        // the expensive half runs under the read lock so API reads are not blocked
        let plan = self.app.read().prepare(ts)?;
        let tick = self.app.write().commit(plan)?;
        self.app.clock.advance_to(ts);
        Ok(tick)
    }

    fn stepped_and_idle(&self) -> bool {
        matches!(*self.app.clock, Clock::Stepped(_))
            && self.feed.is_exhausted()
            && self.feed.last_ts().is_none_or(|last| self.next_tick > last + self.interval)
    }

    /// Ticks forever (or, for a stepped clock, until the feed is drained).
    pub async fn run(mut self) {
        loop {
            if self.stepped_and_idle() {
                tracing::info!("feed drained; evaluation loop idle");
                return;
            }
            let wait = self.app.clock.wall_until(self.next_tick);
            if wait.is_zero() {
                tokio::task::yield_now().await;
            } else {
                tokio::time::sleep(wait).await;
            }
            let ts = self.next_tick;
            match tokio::task::block_in_place(|| self.step(ts)) {
                Ok(tick) => {
                    if !tick.raised.is_empty() || !tick.new_alarms.is_empty() {
                        tracing::info!(ts = %ts, alarms = tick.new_alarms.len(), orders = tick.raised.len(), "tick");
                    }
                    // no subscribers is not an error
                    let _ = self.app.ticks.send(tick);
                    self.next_tick = ts + self.interval;
                }
                Err(e) => {
                    // state was not advanced; retry on the next interval
                    tracing::error!(ts = %ts, error = %e, "evaluation failed");
                    self.next_tick = ts + self.interval;
                }
            }
        }
    }
}

/// Runs the evaluation loop and the HTTP server until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let service = Service::build(&config)?;
    let app = router(service.app.clone());
    let listener = tokio::net::TcpListener::bind(&config.listen)
        .await
        .with_context(|| format!("binding {}", config.listen))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    tokio::spawn(service.run());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
