//! Server configuration: one TOML or JSON file plus `COOPS_*` environment overrides.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Duration as StdDuration;

use chrono::Duration;
use coops_core::domain::PermissionDictionary;
use coops_core::social::{ProTipSource, DEFAULT_PRO_TIP_PERIOD_DAYS};
use coops_core::ServiceConfig;
use rand::RngCore;
use serde::Deserialize;

/// File holding the generated telemetry salt inside the data directory.
pub const SALT_FILE: &str = "telemetry.salt";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot access {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for {var}: {value:?}")]
    Env { var: &'static str, value: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] coops_core::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bind: SocketAddr,
    /// Journal and telemetry directory; `None` keeps all state in memory.
    pub data_dir: Option<PathBuf>,
    /// Permission dictionary JSON; the built-in dictionary when unset.
    pub permissions: Option<PathBuf>,
    /// Pro-tip list (JSON array of strings); the built-in list when unset.
    pub pro_tips: Option<PathBuf>,
    pub pro_tip_period_days: i64,
    /// How often the pro-tip schedule is checked. Zero disables the timer.
    pub pro_tip_check_secs: u64,
    /// Secret mixed into every telemetry hash. When unset a random salt is kept
    /// in the data directory so hashes stay linkable across restarts.
    pub telemetry_salt: Option<String>,
    /// Static web client bundle served under `/app`.
    pub web_root: Option<PathBuf>,
    /// Upper bound on `wait_ms` for notification long-polls.
    pub max_poll_wait_ms: u64,
    pub sync_writes: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bind: SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), 8080),
            data_dir: None,
            permissions: None,
            pro_tips: None,
            pro_tip_period_days: DEFAULT_PRO_TIP_PERIOD_DAYS,
            pro_tip_check_secs: 3600,
            telemetry_salt: None,
            web_root: None,
            max_poll_wait_ms: 30_000,
            sync_writes: true,
        }
    }
}

impl Config {
    /// Parses a config file; `.json` files as JSON, anything else as TOML.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|message| ConfigError::Parse {
            path: path.to_owned(),
            message,
        })
    }

    /// Applies `COOPS_*` overrides from the process environment.
    pub fn with_env(self) -> Result<Self, ConfigError> {
        self.with_overrides(|var| std::env::var(var).ok())
    }

    pub fn with_overrides(mut self, get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        fn parse<T: std::str::FromStr>(var: &'static str, value: String) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::Env { var, value })
        }
        if let Some(v) = get("COOPS_BIND") {
            self.bind = parse("COOPS_BIND", v)?;
        }
        if let Some(v) = get("COOPS_PORT") {
            self.bind.set_port(parse("COOPS_PORT", v)?);
        }
        if let Some(v) = get("COOPS_DATA_DIR") {
            self.data_dir = Some(v.into());
        }
        if let Some(v) = get("COOPS_PERMISSIONS") {
            self.permissions = Some(v.into());
        }
        if let Some(v) = get("COOPS_PRO_TIPS") {
            self.pro_tips = Some(v.into());
        }
        if let Some(v) = get("COOPS_PRO_TIP_PERIOD_DAYS") {
            self.pro_tip_period_days = parse("COOPS_PRO_TIP_PERIOD_DAYS", v)?;
        }
        if let Some(v) = get("COOPS_TELEMETRY_SALT") {
            self.telemetry_salt = Some(v);
        }
        if let Some(v) = get("COOPS_WEB_ROOT") {
            self.web_root = Some(v.into());
        }
        Ok(self)
    }

    pub fn pro_tip_check_interval(&self) -> Option<StdDuration> {
        (self.pro_tip_check_secs > 0).then(|| StdDuration::from_secs(self.pro_tip_check_secs))
    }

    pub fn max_poll_wait(&self) -> StdDuration {
        StdDuration::from_millis(self.max_poll_wait_ms)
    }

    /// Loads the dictionary, tips and salt the service needs.
    pub fn service_config(&self) -> Result<ServiceConfig, ConfigError> {
        if self.pro_tip_period_days <= 0 {
            return Err(ConfigError::Invalid("pro_tip_period_days must be positive".into()));
        }
        let period = Duration::days(self.pro_tip_period_days);
        let dictionary = match &self.permissions {
            Some(path) => PermissionDictionary::load(path)?,
            None => PermissionDictionary::builtin(),
        };
        let pro_tips = match &self.pro_tips {
            Some(path) => ProTipSource::load(path, period)?,
            None => ProTipSource::new(ProTipSource::builtin().tips, period)?,
        };
        let mut config = ServiceConfig::in_memory(self.salt()?);
        config.data_dir = self.data_dir.clone();
        config.dictionary = dictionary;
        config.pro_tips = pro_tips;
        config.sync_writes = self.sync_writes;
        Ok(config)
    }

    fn salt(&self) -> Result<Vec<u8>, ConfigError> {
        if let Some(salt) = &self.telemetry_salt {
            if salt.is_empty() {
                return Err(ConfigError::Invalid("telemetry_salt must not be empty".into()));
            }
            return Ok(salt.as_bytes().to_vec());
        }
        let mut fresh = [0u8; 32];
        rand::rng().fill_bytes(&mut fresh);
        let Some(dir) = &self.data_dir else {
            return Ok(fresh.to_vec());
        };
        let path = dir.join(SALT_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => hex::decode(text.trim()).map_err(|_| ConfigError::Parse {
                path,
                message: "salt file is not hex".into(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                std::fs::create_dir_all(dir).map_err(|source| ConfigError::Read {
                    path: dir.clone(),
                    source,
                })?;
                std::fs::write(&path, hex::encode(fresh))
                    .map_err(|source| ConfigError::Read { path, source })?;
                Ok(fresh.to_vec())
            }
            Err(source) => Err(ConfigError::Read { path, source }),
        }
    }
}
