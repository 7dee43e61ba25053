//! Experiment config: one JSON document with `model`, `train` and `data`
//! sections. Missing fields take defaults; `key.path=value` overrides are
//! applied on top of the parsed document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::data::DataConfig;
use crate::error::{MdaError, Result};
use crate::network::ModelConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    /// Directory relative data paths resolve against (the config's directory).
    #[serde(skip)]
    pub data_base: Option<PathBuf>,
}

fn config_error(path: impl Into<String>, message: impl ToString) -> MdaError {
    MdaError::Config {
        path: path.into(),
        message: message.to_string(),
    }
}

/// Sets `dotted` inside `doc`. Every segment must already exist so typos fail.
fn set_path(doc: &mut Value, dotted: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    for seg in dotted.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(seg),
            Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| config_error(dotted, "no such field"))?;
    }
    *cur = value;
    Ok(())
}

/// Parses `key=value`; the value is read as JSON, falling back to a string.
pub fn parse_override(raw: &str) -> Result<(String, Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| config_error(raw, "override must look like key.path=value"))?;
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.trim().to_string(), value))
}

impl ExperimentConfig {
    /// Parses a JSON document, reporting the failing field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| config_error(e.path().to_string(), e.inner()))
    }

    /// Reads `path` and applies `overrides` in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_error(path.display().to_string(), e))?;
        let mut cfg = Self::from_json(&text)?.with_overrides(overrides)?;
        cfg.data_base = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn with_overrides(self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let base = self.data_base.clone();
        let mut doc = serde_json::to_value(&self)?;
        for raw in overrides {
            let (key, value) = parse_override(raw)?;
            set_path(&mut doc, &key, value)?;
        }
        let mut cfg = Self::from_json(&doc.to_string())?;
        cfg.data_base = base;
        Ok(cfg)
    }

    /// Checks every section.
    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| config_error("model", e))?;
        self.train.validate().map_err(|e| config_error("train", e))?;
        if let DataConfig::Synthetic(s) = &self.data {
            s.validate().map_err(|e| config_error("data", e))?;
        }
        Ok(())
    }

    /// Same experiment with model init and batch order driven by `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.model.seed = seed;
        self.train.seed = seed;
        self
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn content_hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn override_wins_and_parses_json_values() {
        let cfg = ExperimentConfig::from_json(r#"{"train": {"seed": 3}}"#)
            .unwrap()
            .with_overrides(&["train.seed=7".into(), "train.schedule={\"kind\":\"constant\"}".into()])
            .unwrap();
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.train.schedule, crate::train::Schedule::Constant);
    }

    #[test]
    fn unknown_field_reports_path() {
        match ExperimentConfig::from_json(r#"{"train": {"iterations": "many"}}"#) {
            Err(MdaError::Config { path, .. }) => assert_eq!(path, "train.iterations"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            ExperimentConfig::default().with_overrides(&["train.nope=1".into()]),
            Err(MdaError::Config { .. })
        ));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let b = a.clone().with_seed(1);
        assert_eq!(a.content_hash().unwrap(), ExperimentConfig::default().content_hash().unwrap());
        assert_ne!(a.content_hash().unwrap(), b.content_hash().unwrap());
        assert_eq!(a.content_hash().unwrap().len(), 64);
    }
}
