use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pgs_core::imaging::DEFAULT_CAPTCHA_WINDOW_SECS;
use pgs_core::money::Money;
use pgs_core::protocol::ThresholdPolicy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::ApiRole;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("environment variable {var}: {reason}")]
    Env { var: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub client_id: String,
    pub client_secret: String,
    pub role: ApiRole,
}

impl ClientConfig {
    pub fn new(id: &str, secret: &str, role: ApiRole) -> Self {
        Self {
            client_id: id.into(),
            client_secret: secret.into(),
            role,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BankConfig {
    pub port: u16,
    /// Journal location; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    /// Minor units. Used for pairs with no history and no override.
    pub batch_threshold: i64,
    pub median_multiplier: i64,
    /// `"seller|buyer"` to minor units.
    pub threshold_overrides: BTreeMap<String, i64>,
    pub captcha_window_secs: u32,
    pub token_ttl_secs: u64,
    /// Run pairing inside the upload request instead of on a worker.
    pub sync_jobs: bool,
    pub clients: Vec<ClientConfig>,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            data_dir: None,
            batch_threshold: ThresholdPolicy::default().default_threshold.0,
            median_multiplier: ThresholdPolicy::default().median_multiplier,
            threshold_overrides: BTreeMap::new(),
            captcha_window_secs: DEFAULT_CAPTCHA_WINDOW_SECS,
            token_ttl_secs: 3600,
            sync_jobs: false,
            // demo credentials; replace via the config file or PGS_CLIENTS
            clients: vec![
                ClientConfig::new("operator", "operator-secret", ApiRole::Admin),
                ClientConfig::new("broker", "broker-secret", ApiRole::User),
            ],
        }
    }
}

impl BankConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path` if given, then applies `PGS_*` overrides from the
    /// process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    /// `PGS_CLIENTS` is `id:secret:role` entries separated by commas, where
    /// role is `admin` or `user`; it replaces the configured list.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(var: &'static str, v: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            v.trim().parse().map_err(|e: T::Err| ConfigError::Env {
                var,
                reason: e.to_string(),
            })
        }
        if let Some(v) = get("PGS_PORT") {
            self.port = parse("PGS_PORT", &v)?;
        }
        if let Some(v) = get("PGS_BATCH_THRESHOLD") {
            self.batch_threshold = parse("PGS_BATCH_THRESHOLD", &v)?;
        }
        if let Some(v) = get("PGS_CAPTCHA_WINDOW_SECS") {
            self.captcha_window_secs = parse("PGS_CAPTCHA_WINDOW_SECS", &v)?;
        }
        if let Some(v) = get("PGS_TOKEN_TTL_SECS") {
            self.token_ttl_secs = parse("PGS_TOKEN_TTL_SECS", &v)?;
        }
        if let Some(v) = get("PGS_DATA_DIR") {
            self.data_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = get("PGS_CLIENTS") {
            let mut clients = Vec::new();
            for entry in v.split(',').map(str::trim).filter(|e| !e.is_empty()) {
                let parts: Vec<&str> = entry.split(':').collect();
                let [id, secret, role] = parts[..] else {
                    return Err(ConfigError::Env {
                        var: "PGS_CLIENTS",
                        reason: format!("expected id:secret:role, got {entry:?}"),
                    });
                };
                let role = parse("PGS_CLIENTS", role)?;
                clients.push(ClientConfig::new(id, secret, role));
            }
            self.clients = clients;
        }
        Ok(())
    }

    pub fn threshold_policy(&self) -> ThresholdPolicy {
        ThresholdPolicy {
            default_threshold: Money(self.batch_threshold),
            median_multiplier: self.median_multiplier,
            overrides: self
                .threshold_overrides
                .iter()
                .map(|(k, v)| (k.clone(), Money(*v)))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_then_env() {
        let mut cfg = BankConfig::from_toml(
            r#"
            port = 9000
            batch_threshold = 100
            [[clients]]
            client_id = "ops"
            client_secret = "s"
            role = "admin"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.captcha_window_secs, 60);
        assert_eq!(cfg.clients.len(), 1);

        let env: BTreeMap<&str, &str> = [
            ("PGS_PORT", "9100"),
            ("PGS_CAPTCHA_WINDOW_SECS", "10"),
            ("PGS_CLIENTS", "a:x:admin, b:y:user"),
        ]
        .into();
        cfg.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(cfg.port, 9100);
        assert_eq!(cfg.batch_threshold, 100);
        assert_eq!(cfg.captcha_window_secs, 10);
        assert_eq!(cfg.clients[1], ClientConfig::new("b", "y", ApiRole::User));
    }

    #[test]
    fn bad_env_is_reported() {
        let mut cfg = BankConfig::default();
        let err = cfg
            .apply_env(|k| (k == "PGS_CLIENTS").then(|| "nocolons".to_string()))
            .unwrap_err();
        assert!(err.to_string().contains("PGS_CLIENTS"));
        assert!(cfg.apply_env(|k| (k == "PGS_PORT").then(|| "x".into())).is_err());
    }
}
