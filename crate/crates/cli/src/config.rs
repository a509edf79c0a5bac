//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kermit_core::describe::WireSchema;
use kermit_core::{LossConfig, MarginMode, Pooling, PositionKind, SequenceMode, TrainConfig};

/// Bad key, bad value or unreadable config file; reported as a usage error.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("{key}: {message}")]
    Value { key: String, message: String },
    #[error("{key} is read from the environment variable {env}, never from configuration")]
    Secret { key: String, env: &'static str },
    #[error("{path}:{line}: expected key = value")]
    Syntax { path: PathBuf, line: usize },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub schema: WireSchema,
    pub timeout_secs: f64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub rate: f64,
    pub burst: u32,
    pub max_in_flight: usize,
    pub template: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            schema: WireSchema::ChatCompletions,
            timeout_secs: 60.0,
            retries: 3,
            backoff_ms: 500,
            rate: 2.0,
            burst: 4,
            max_in_flight: 4,
            template: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    /// `wn18rr`, `fb15k237` or a path; unset means `<data>/relations.json`.
    pub registry: Option<String>,
    pub cache: Option<PathBuf>,
    pub out: PathBuf,
    pub mode: SequenceMode,
    pub dim: usize,
    pub max_len: usize,
    pub pooling: Pooling,
    pub positions: PositionKind,
    pub layers: usize,
    pub min_freq: usize,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub service: ServiceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            registry: None,
            cache: None,
            out: PathBuf::from("runs"),
            mode: SequenceMode::Full,
            dim: 64,
            max_len: 64,
            pooling: Pooling::Mean,
            positions: PositionKind::Learned,
            layers: 0,
            min_freq: 2,
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "data",
    "registry",
    "cache",
    "out",
    "mode",
    "dim",
    "max_len",
    "pooling",
    "positions",
    "layers",
    "min_freq",
    "gamma",
    "tau",
    "margin_mode",
    "seed",
    "learning_rate",
    "epochs",
    "batch_size",
    "weight_decay",
    "checkpoint_every",
    "service_schema",
    "service_timeout_secs",
    "service_retries",
    "service_backoff_ms",
    "service_rate",
    "service_burst",
    "service_max_in_flight",
    "template",
];

const PATH_KEYS: &[&str] = &["data", "cache", "out", "template"];

const SECRETS: &[(&str, &str)] = &[
    ("service_url", "KERMIT_SERVICE_URL"),
    ("endpoint", "KERMIT_SERVICE_URL"),
    ("service_key", "KERMIT_SERVICE_KEY"),
    ("api_key", "KERMIT_SERVICE_KEY"),
    ("service_model", "KERMIT_SERVICE_MODEL"),
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.to_string(),
        message: format!("cannot parse {value:?}: {e}"),
    })
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "data" => self.data = opt_path(value),
            "registry" => self.registry = (!value.is_empty()).then(|| value.to_string()),
            "cache" => self.cache = opt_path(value),
            "out" => self.out = PathBuf::from(value),
            "mode" => self.mode = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "pooling" => self.pooling = parse(key, value)?,
            "positions" => self.positions = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "min_freq" => self.min_freq = parse(key, value)?,
            "gamma" => self.loss.gamma = parse(key, value)?,
            "tau" => self.loss.tau = parse(key, value)?,
            "margin_mode" => self.loss.margin_mode = parse::<MarginMode>(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "weight_decay" => self.train.optimizer.weight_decay = parse(key, value)?,
            "checkpoint_every" => self.train.checkpoint_every = parse(key, value)?,
            "service_schema" => self.service.schema = parse(key, value)?,
            "service_timeout_secs" => self.service.timeout_secs = parse(key, value)?,
            "service_retries" => self.service.retries = parse(key, value)?,
            "service_backoff_ms" => self.service.backoff_ms = parse(key, value)?,
            "service_rate" => self.service.rate = parse(key, value)?,
            "service_burst" => self.service.burst = parse(key, value)?,
            "service_max_in_flight" => self.service.max_in_flight = parse(key, value)?,
            "template" => self.service.template = opt_path(value),
            _ => {
                if let Some((_, env)) = SECRETS.iter().find(|(k, _)| *k == key) {
                    return Err(ConfigError::Secret {
                        key: key.to_string(),
                        env,
                    });
                }
                return Err(ConfigError::UnknownKey(key.to_string()));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "data" => show_path(&self.data),
            "registry" => self.registry.clone().unwrap_or_default(),
            "cache" => show_path(&self.cache),
            "out" => self.out.display().to_string(),
            "mode" => self.mode.as_str().to_string(),
            "dim" => self.dim.to_string(),
            "max_len" => self.max_len.to_string(),
            "pooling" => self.pooling.to_string(),
            "positions" => self.positions.to_string(),
            "layers" => self.layers.to_string(),
            "min_freq" => self.min_freq.to_string(),
            "gamma" => self.loss.gamma.to_string(),
            "tau" => self.loss.tau.to_string(),
            "margin_mode" => self.loss.margin_mode.to_string(),
            "seed" => self.train.seed.to_string(),
            "learning_rate" => self.train.learning_rate.to_string(),
            "epochs" => self.train.epochs.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "weight_decay" => self.train.optimizer.weight_decay.to_string(),
            "checkpoint_every" => self.train.checkpoint_every.to_string(),
            "service_schema" => match self.service.schema {
                WireSchema::ChatCompletions => "chat".to_string(),
                WireSchema::Plain => "plain".to_string(),
            },
            "service_timeout_secs" => self.service.timeout_secs.to_string(),
            "service_retries" => self.service.retries.to_string(),
            "service_backoff_ms" => self.service.backoff_ms.to_string(),
            "service_rate" => self.service.rate.to_string(),
            "service_burst" => self.service.burst.to_string(),
            "service_max_in_flight" => self.service.max_in_flight.to_string(),
            "template" => show_path(&self.service.template),
            _ => return None,
        })
    }

    /// Every key with its current value, in [`KEYS`] order.
    pub fn entries(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .map(|k| (k.to_string(), self.get(k).expect("listed key")))
            .collect()
    }

    /// Applies a config file. Relative paths in it are taken relative to the
    /// file's own directory.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: path.to_path_buf(),
                line: i + 1,
            })?;
            let (key, value) = (key.trim(), value.trim());
            let relative_path =
                PATH_KEYS.contains(&key) || (key == "registry" && !matches!(value, "wn18rr" | "fb15k237"));
            if relative_path && !value.is_empty() && Path::new(value).is_relative() {
                self.set(key, &base.join(value).display().to_string())?;
            } else {
                self.set(key, value)?;
            }
        }
        Ok(())
    }

    pub fn apply_pairs(&mut self, pairs: &[(String, String)]) -> Result<(), ConfigError> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }
}

/// Splits a `key=value` command-line override.
pub fn split_assignment(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::Value {
        key: s.to_string(),
        message: "expected KEY=VALUE".into(),
    })?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        let mut c = RunConfig {
            data: Some(PathBuf::from("d")),
            ..RunConfig::default()
        };
        c.loss.tau = 0.125;
        let entries = c.entries();
        assert_eq!(entries.len(), KEYS.len());
        let mut back = RunConfig::default();
        for (k, v) in &entries {
            back.set(k, v).unwrap();
        }
        assert_eq!(back, c);
    }

    #[test]
    fn file_values_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# toy\ndata = toy\nepochs=3\nregistry = wn18rr\n\nmode = baseline\n",
        )
        .unwrap();
        let mut c = RunConfig::default();
        c.apply_file(&path).unwrap();
        assert_eq!(c.data, Some(dir.path().join("toy")));
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.registry.as_deref(), Some("wn18rr"));
        assert_eq!(c.mode, SequenceMode::Baseline);
    }

    #[test]
    fn rejects_secrets_unknown_keys_and_bad_values() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("api_key", "x"), Err(ConfigError::Secret { .. })));
        assert!(matches!(c.set("colour", "x"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(c.set("epochs", "many"), Err(ConfigError::Value { .. })));
        assert!(split_assignment("tau").is_err());
        assert_eq!(
            split_assignment(" tau = 0.1").unwrap(),
            ("tau".into(), "0.1".into())
        );
    }
}
