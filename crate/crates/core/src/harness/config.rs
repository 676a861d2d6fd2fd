//! Profile-based configuration with file overrides (TOML or JSON).

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::scenario::{Profile, SystemConfig};

/// Parses a TOML or JSON document (chosen by extension, TOML otherwise) into a JSON value.
pub fn read_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)?;
    parse_document(&text, path.extension().and_then(|e| e.to_str()) == Some("json"))
}

pub fn parse_document(text: &str, json: bool) -> Result<Value> {
    if json {
        Ok(serde_json::from_str(text)?)
    } else {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        Ok(serde_json::to_value(table)?)
    }
}

/// Recursively overlays `patch` onto `base`; objects merge key by key.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

fn decode<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
}

/// The profile's configuration with `overrides` applied, validated.
pub fn config_with_overrides(profile: Profile, overrides: &Value) -> Result<SystemConfig> {
    let mut base = serde_json::to_value(SystemConfig::for_profile(profile))?;
    merge(&mut base, overrides);
    let cfg: SystemConfig = decode(base)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a configuration file over a profile; the bare profile when `path` is `None`.
pub fn load_config(path: Option<&Path>, profile: Profile) -> Result<SystemConfig> {
    let overrides = match path {
        Some(p) => read_document(p)?,
        None => Value::Object(Default::default()),
    };
    config_with_overrides(profile, &overrides)
}
