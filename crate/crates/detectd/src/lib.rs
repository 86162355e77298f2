//! Real-time DDoS detection service: an HTTP classifier front end with a
//! threshold decision engine, an operator blocklist and a sliding window of
//! recent verdicts, plus a replay client that drives it with labelled flows.

pub mod blocklist;
pub mod config;
pub mod decision;
pub mod replay;
pub mod server;
pub mod stats;

pub use config::{RuntimeConfig, ServiceConfig};
pub use decision::{decide, Decision};
pub use replay::{replay, ReplayError, ReplayOptions, ReplayReport};
pub use server::{router, run, serve_on, AppState, DetectionResponse, ServiceError};
