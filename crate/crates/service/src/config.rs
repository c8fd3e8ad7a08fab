//! TOML service configuration. Relative paths are resolved against the
//! directory holding the config file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use cryptohalal_core::market::{ClientConfig, DEFAULT_API_BASE, DEFAULT_API_KEY_HEADER};
use cryptohalal_core::rulestore::HashParams;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub server: ServerConfig,
    pub paths: PathsConfig,
    #[serde(default)]
    pub market: MarketConfig,
    #[serde(default)]
    pub features: FeaturesConfig,
    #[serde(default)]
    pub auth: AuthConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
}

fn default_bind() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { bind: default_bind() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub store: PathBuf,
    pub accounts: PathBuf,
    pub model: PathBuf,
    /// Built-in lexicon when absent.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    /// Built-in stopword list when absent.
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
    /// Recorded market fixtures; required for offline mode.
    #[serde(default)]
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    #[serde(default = "default_api_base")]
    pub api_base: String,
    #[serde(default = "default_api_key_header")]
    pub api_key_header: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Serve every classification from fixtures.
    #[serde(default)]
    pub offline: bool,
}

fn default_api_base() -> String {
    DEFAULT_API_BASE.to_owned()
}
fn default_api_key_header() -> String {
    DEFAULT_API_KEY_HEADER.to_owned()
}
fn default_timeout() -> f64 {
    10.0
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            api_base: default_api_base(),
            api_key_header: default_api_key_header(),
            timeout_secs: default_timeout(),
            offline: false,
        }
    }
}

impl MarketConfig {
    pub fn client_config(&self) -> ClientConfig {
        ClientConfig {
            api_base: self.api_base.clone(),
            api_key_header: self.api_key_header.clone(),
            timeout: Duration::from_secs_f64(self.timeout_secs),
            ..ClientConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesConfig {
    #[serde(default = "one")]
    pub min_count: usize,
}

fn one() -> usize {
    1
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig { min_count: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthConfig {
    #[serde(default = "default_ttl")]
    pub token_ttl_hours: f64,
    #[serde(default)]
    pub argon2: Option<HashParams>,
}

fn default_ttl() -> f64 {
    12.0
}

impl Default for AuthConfig {
    fn default() -> Self {
        AuthConfig {
            token_ttl_hours: default_ttl(),
            argon2: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|message| ConfigError::Parse {
            path: path.to_owned(),
            message,
        })
    }

    /// Parses TOML text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let mut c: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        if c.features.min_count == 0 {
            return Err("features.min_count must be at least 1".into());
        }
        if !(c.market.timeout_secs > 0.0 && c.market.timeout_secs.is_finite()) {
            return Err("market.timeout_secs must be positive".into());
        }
        if !(c.auth.token_ttl_hours > 0.0 && c.auth.token_ttl_hours.is_finite()) {
            return Err("auth.token_ttl_hours must be positive".into());
        }
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut c.paths;
        resolve(&mut paths.store);
        resolve(&mut paths.accounts);
        resolve(&mut paths.model);
        for p in [&mut paths.lexicon, &mut paths.stopwords, &mut paths.fixtures].into_iter().flatten() {
            resolve(p);
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = Config::parse(
            "[paths]\nstore = \"s.jsonl\"\naccounts = \"a.jsonl\"\nmodel = \"/m/svm.model\"\n",
            Path::new("/etc/ch"),
        )
        .unwrap();
        assert_eq!(c.paths.store, PathBuf::from("/etc/ch/s.jsonl"));
        assert_eq!(c.paths.model, PathBuf::from("/m/svm.model"));
        assert_eq!(c.server.bind.port(), 8080);
        assert_eq!(c.market.api_key_header, DEFAULT_API_KEY_HEADER);
        assert_eq!(c.features.min_count, 1);
        assert!(!c.market.offline);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let base = Path::new(".");
        assert!(Config::parse("[paths]\nstore=\"a\"\naccounts=\"b\"\nmodel=\"c\"\ncolour=1\n", base).is_err());
        assert!(Config::parse(
            "[paths]\nstore=\"a\"\naccounts=\"b\"\nmodel=\"c\"\n[features]\nmin_count=0\n",
            base
        )
        .is_err());
        assert!(Config::parse("", base).is_err());
    }

    #[test]
    fn example_config_parses() {
        let text = include_str!("../../../config/cryptohalal.example.toml");
        let c = Config::parse(text, Path::new("/etc/ch")).unwrap();
        assert_eq!(c.paths.model, Path::new("/etc/ch/../var/svm.model"));
        assert_eq!(c.market, MarketConfig::default());
        assert_eq!(c.auth.argon2, None);
    }
}
