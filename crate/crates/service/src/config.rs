//! Environment configuration.

use std::net::SocketAddr;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{name} is not valid: {value:?}")]
    Invalid { name: &'static str, value: String },
    #[error("set WRANGLE_TRANSCRIPT for mock mode or WRANGLE_LLM_ENDPOINT and WRANGLE_LLM_MODEL for a live model")]
    NoModel,
}

/// Where model replies come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    /// Every new session replays this transcript from the start.
    Transcript(PathBuf),
    Http { endpoint: String, model: String, key: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub bind: SocketAddr,
    pub model: ModelSource,
    pub max_repairs: usize,
    /// Sessions are written here as JSON on shutdown.
    pub snapshot: Option<PathBuf>,
}

impl Config {
    /// Reads `WRANGLE_BIND`, `WRANGLE_TRANSCRIPT`, `WRANGLE_LLM_ENDPOINT`,
    /// `WRANGLE_LLM_MODEL`, `WRANGLE_LLM_KEY`, `WRANGLE_MAX_REPAIRS` and
    /// `WRANGLE_SNAPSHOT` through `var`.
    pub fn from_vars(var: impl Fn(&str) -> Option<String>) -> Result<Config, ConfigError> {
        let bind_text = var("WRANGLE_BIND").unwrap_or_else(|| "127.0.0.1:8080".into());
        let bind = bind_text.parse().map_err(|_| ConfigError::Invalid { name: "WRANGLE_BIND", value: bind_text })?;
        let max_repairs = match var("WRANGLE_MAX_REPAIRS") {
            None => 3,
            Some(v) => v.parse().map_err(|_| ConfigError::Invalid { name: "WRANGLE_MAX_REPAIRS", value: v })?,
        };
        let model = match (var("WRANGLE_TRANSCRIPT"), var("WRANGLE_LLM_ENDPOINT"), var("WRANGLE_LLM_MODEL")) {
            (Some(path), _, _) => ModelSource::Transcript(path.into()),
            (None, Some(endpoint), Some(model)) => ModelSource::Http { endpoint, model, key: var("WRANGLE_LLM_KEY") },
            _ => return Err(ConfigError::NoModel),
        };
        Ok(Config { bind, model, max_repairs, snapshot: var("WRANGLE_SNAPSHOT").map(PathBuf::from) })
    }

    pub fn from_env() -> Result<Config, ConfigError> {
        Config::from_vars(|k| std::env::var(k).ok().filter(|v| !v.is_empty()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn config(pairs: &[(&str, &str)]) -> Result<Config, ConfigError> {
        let vars: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Config::from_vars(|k| vars.get(k).cloned())
    }

    #[test]
    fn transcript_mode_with_defaults() {
        let c = config(&[("WRANGLE_TRANSCRIPT", "t.json")]).unwrap();
        assert_eq!(c.model, ModelSource::Transcript("t.json".into()));
        assert_eq!(c.max_repairs, 3);
        assert_eq!(c.bind.port(), 8080);
    }

    #[test]
    fn live_mode_needs_endpoint_and_model() {
        assert!(matches!(config(&[("WRANGLE_LLM_ENDPOINT", "http://x")]), Err(ConfigError::NoModel)));
        let c = config(&[("WRANGLE_LLM_ENDPOINT", "http://x"), ("WRANGLE_LLM_MODEL", "m"), ("WRANGLE_MAX_REPAIRS", "5")]).unwrap();
        assert_eq!(c.model, ModelSource::Http { endpoint: "http://x".into(), model: "m".into(), key: None });
        assert_eq!(c.max_repairs, 5);
    }

    #[test]
    fn bad_numbers_are_reported() {
        let err = config(&[("WRANGLE_TRANSCRIPT", "t"), ("WRANGLE_MAX_REPAIRS", "many")]).unwrap_err();
        assert!(err.to_string().contains("WRANGLE_MAX_REPAIRS"));
    }
}
