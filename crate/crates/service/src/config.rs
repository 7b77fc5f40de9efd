use std::net::IpAddr;
use std::path::{Path, PathBuf};

use nftscope_core::indicators::WhalePolicy;
use nftscope_core::storage::FilterField;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_DATA_DIR: &str = "NFTSCOPE_DATA_DIR";
pub const ENV_BIND: &str = "NFTSCOPE_BIND";
pub const ENV_PORT: &str = "NFTSCOPE_PORT";
pub const ENV_CORS_ORIGINS: &str = "NFTSCOPE_CORS_ORIGINS";
pub const ENV_AXES: &str = "NFTSCOPE_AXES";

pub const DEFAULT_AXES: [FilterField; 8] = [
    FilterField::TraitRarity,
    FilterField::ImageRarity,
    FilterField::LastPrice,
    FilterField::PriceRank,
    FilterField::PastOwners,
    FilterField::CurrentHoldTime,
    FilterField::LongestHoldTime,
    FilterField::SellersPnl,
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid {var}: {message}")]
    Env { var: &'static str, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Service settings. Read from a TOML file, then overridden by `NFTSCOPE_*`
/// environment variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: IpAddr,
    pub port: u16,
    /// Exact origins allowed by CORS; `"*"` allows any.
    pub cors_origins: Vec<String>,
    /// Indicator matrix axes, in display order.
    pub axes: Vec<FilterField>,
    pub whale_min_holdings: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: PathBuf::from("data"),
            bind: IpAddr::from([127, 0, 0, 1]),
            port: 8080,
            cors_origins: vec![
                "http://localhost:5173".into(),
                "http://127.0.0.1:5173".into(),
                "http://localhost:3000".into(),
            ],
            axes: DEFAULT_AXES.to_vec(),
            whale_min_holdings: WhalePolicy::default().min_holdings,
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.into(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.into(),
            source,
        })
    }

    /// File (or defaults), then process environment, then validation.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut c = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        c.apply_env(|k| std::env::var(k).ok())?;
        c.validate()?;
        Ok(c)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = var(ENV_DATA_DIR) {
            self.data_dir = v.into();
        }
        if let Some(v) = var(ENV_BIND) {
            self.bind = v.trim().parse().map_err(|e| env_err(ENV_BIND, e))?;
        }
        if let Some(v) = var(ENV_PORT) {
            self.port = v.trim().parse().map_err(|e| env_err(ENV_PORT, e))?;
        }
        if let Some(v) = var(ENV_CORS_ORIGINS) {
            self.cors_origins = split_list(&v).map(str::to_owned).collect();
        }
        if let Some(v) = var(ENV_AXES) {
            self.axes = split_list(&v)
                .map(|a| a.parse().map_err(|e| env_err(ENV_AXES, e)))
                .collect::<Result<_, _>>()?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.axes.is_empty() {
            return Err(ConfigError::Invalid("axes must not be empty".into()));
        }
        for (i, a) in self.axes.iter().enumerate() {
            if self.axes[..i].contains(a) {
                return Err(ConfigError::Invalid(format!("duplicate axis {a:?}")));
            }
        }
        self.whale_policy()?;
        Ok(())
    }

    pub fn whale_policy(&self) -> Result<WhalePolicy, ConfigError> {
        WhalePolicy::new(self.whale_min_holdings).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn env_err(var: &'static str, e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Env {
        var,
        message: e.to_string(),
    }
}
