//! Per-run metadata: enough to repeat a run exactly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use kermit_core::encoder::hex_digest;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;

pub struct RunMeta {
    command: &'static str,
    started: Instant,
    inputs: BTreeMap<String, String>,
    extra: Map<String, Value>,
}

impl RunMeta {
    pub fn start(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            inputs: BTreeMap::new(),
            extra: Map::new(),
        }
    }

    /// Records the SHA-256 of an input file.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), hex_digest(&bytes));
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.extra.insert(key.to_string(), value.into());
    }

    pub fn write(self, path: &Path, config: &RunConfig) -> Result<PathBuf> {
        let mut doc = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": config.train.seed,
            "config": config.entries(),
            "inputs": self.inputs,
            "wall_time_secs": self.started.elapsed().as_secs_f64(),
        });
        doc.as_object_mut().expect("object").extend(self.extra);
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path.to_path_buf())
    }
}

/// The config echo of an earlier run's metadata file.
pub fn read_config_echo(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let config = doc
        .get("config")
        .and_then(Value::as_object)
        .with_context(|| format!("{} has no config section", path.display()))?;
    Ok(config
        .iter()
        .map(|(k, v)| (k.clone(), v.as_str().unwrap_or_default().to_string()))
        .collect())
}
