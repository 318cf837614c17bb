use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use veld_core::audio::AudioZone;
use veld_core::world::{load_world, World, WorldError};

pub const DEFAULT_MAX_CLIENTS: usize = 150;
pub const DEFAULT_PRESENCE_RATE: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("max_clients must be at least 1")]
    NoCapacity,
    #[error("instructor_token must not be empty")]
    EmptyToken,
    #[error("presence_rate must be a finite rate >= 0, got {0}")]
    InvalidPresenceRate(f64),
    #[error("audio_zone_defaults: {0}")]
    AudioZone(#[from] veld_core::audio::AudioError),
    #[error("world file {path}: {source}")]
    World { path: PathBuf, source: WorldError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    pub listen_port: u16,
    pub instructor_token: String,
    /// Relative paths resolve against the directory holding the config file.
    pub world_file: PathBuf,
    #[serde(default)]
    pub audio_zone_defaults: AudioZone,
    #[serde(default = "default_max_clients")]
    pub max_clients: usize,
    /// Position rebroadcasts per client per second. 0 forwards every update
    /// immediately.
    #[serde(default = "default_presence_rate")]
    pub presence_rate: f64,
    /// Port of the WebSocket bridge. Defaults to `listen_port + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ws_port: Option<u16>,
}

fn default_max_clients() -> usize {
    DEFAULT_MAX_CLIENTS
}

fn default_presence_rate() -> f64 {
    DEFAULT_PRESENCE_RATE
}

impl ServerConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: ServerConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file and makes `world_file` absolute.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut config = Self::from_json(&text)?;
        if config.world_file.is_relative() {
            if let Some(dir) = path.parent() {
                config.world_file = dir.join(&config.world_file);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_clients == 0 {
            return Err(ConfigError::NoCapacity);
        }
        if self.instructor_token.is_empty() {
            return Err(ConfigError::EmptyToken);
        }
        if !(self.presence_rate >= 0.0 && self.presence_rate.is_finite()) {
            return Err(ConfigError::InvalidPresenceRate(self.presence_rate));
        }
        self.audio_zone_defaults.validate()?;
        Ok(())
    }

    pub fn ws_port(&self) -> u16 {
        self.ws_port.unwrap_or_else(|| self.listen_port.wrapping_add(1))
    }

    pub fn load_world(&self) -> Result<World, ConfigError> {
        let path = &self.world_file;
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
        load_world(&text).map_err(|source| ConfigError::World { path: path.clone(), source })
    }

    /// The world's own audio zone if it declares one, else the defaults.
    pub fn audio_zone(&self, world: &World) -> AudioZone {
        world.audio_zone.unwrap_or(self.audio_zone_defaults)
    }
}
