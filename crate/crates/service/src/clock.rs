//! Wall-clock and simulated time sources for the evaluation loop.

use std::sync::atomic::{AtomicI64, Ordering};
use std::time::Instant;

use chrono::{DateTime, Utc};
use twin_core::timefmt::Timestamp;

#[derive(Debug)]
pub enum Clock {
    Realtime,
    /// `speedup` simulated seconds per wall second from `origin`.
    Scaled { origin: Timestamp, wall: Instant, speedup: f64 },
    /// Advanced explicitly, one tick at a time.
    Stepped(AtomicI64),
}

impl Clock {
    pub fn scaled(origin: Timestamp, speedup: f64) -> Self {
        Clock::Scaled { origin, wall: Instant::now(), speedup }
    }

    pub fn stepped(start: Timestamp) -> Self {
        Clock::Stepped(AtomicI64::new(start.timestamp()))
    }

    pub fn now(&self) -> Timestamp {
        match self {
            Clock::Realtime => truncate(Utc::now()),
            Clock::Scaled { origin, wall, speedup } => {
                let secs = wall.elapsed().as_secs_f64() * speedup;
                truncate(*origin + chrono::Duration::milliseconds((secs * 1000.0) as i64))
            }
            Clock::Stepped(t) => DateTime::from_timestamp(t.load(Ordering::SeqCst), 0).unwrap_or_default(),
        }
    }

    /// Moves a stepped clock forward; other clocks ignore it.
    pub fn advance_to(&self, ts: Timestamp) {
        if let Clock::Stepped(t) = self {
            t.fetch_max(ts.timestamp(), Ordering::SeqCst);
        }
    }

    /// Wall time until simulated `ts` is reached; zero for stepped clocks.
    pub fn wall_until(&self, ts: Timestamp) -> std::time::Duration {
        let ahead = (ts - self.now()).to_std().unwrap_or_default();
        match self {
            Clock::Realtime => ahead,
            Clock::Scaled { speedup, .. } => ahead.div_f64(*speedup),
            Clock::Stepped(_) => std::time::Duration::ZERO,
        }
    }
}

fn truncate(ts: Timestamp) -> Timestamp {
    DateTime::from_timestamp(ts.timestamp(), 0).unwrap_or(ts)
}
