//! Runtime of the lighting twin: the evaluation loop over a persisted event log, the HTTP API
//! consumed by the dashboard, and helpers behind the `twin` command.

pub mod api;
pub mod clock;
pub mod commands;
pub mod config;
pub mod engine;
pub mod report;
pub mod server;

pub use api::{router, AppState};
pub use config::{ClockMode, EngineConfig, ServiceConfig};
pub use engine::{drive, EngineError, EvaluationTick, FeedCursor, TwinState};
