use std::net::SocketAddr;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_PORT: u16 = 5000;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_WINDOW_SECONDS: u64 = 60;
pub const MAX_WINDOW_SECONDS: u64 = 86_400;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("threshold must be a finite value in [0, 1], got {0}")]
    Threshold(f64),
    #[error("window_seconds must be in [1, {MAX_WINDOW_SECONDS}], got {0}")]
    Window(u64),
    #[error("port must be in [1, 65535]")]
    Port,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub model_path: Option<PathBuf>,
    pub blocklist_path: Option<PathBuf>,
    pub runtime: RuntimeConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)),
            model_path: None,
            blocklist_path: None,
            runtime: RuntimeConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.listen.port() == 0 {
            return Err(ConfigError::Port);
        }
        self.runtime.validate()
    }
}

/// The operator-tunable part of the configuration, exposed at `/config`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeConfig {
    pub threshold: f64,
    pub window_seconds: u64,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            window_seconds: DEFAULT_WINDOW_SECONDS,
        }
    }
}

impl RuntimeConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.threshold.is_finite() && (0.0..=1.0).contains(&self.threshold)) {
            return Err(ConfigError::Threshold(self.threshold));
        }
        if !(1..=MAX_WINDOW_SECONDS).contains(&self.window_seconds) {
            return Err(ConfigError::Window(self.window_seconds));
        }
        Ok(())
    }
}

/// Partial update body for `PUT /config`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub threshold: Option<f64>,
    pub window_seconds: Option<u64>,
}

impl ConfigPatch {
    pub fn apply(&self, current: RuntimeConfig) -> Result<RuntimeConfig, ConfigError> {
        let next = RuntimeConfig {
            threshold: self.threshold.unwrap_or(current.threshold),
            window_seconds: self.window_seconds.unwrap_or(current.window_seconds),
        };
        next.validate()?;
        Ok(next)
    }
}
