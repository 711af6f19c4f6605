//! Config loading, seed override and hashing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::output::Output;
use crate::Failure;

const DEFAULT_OUT: &str = "out";

/// Reads a TOML file into a JSON value.
pub fn load(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    serde_json::to_value(table).map_err(|e| Failure::config(e.to_string()))
}

/// Raw config with command-line overrides applied.
pub struct Context {
    raw: Value,
    out: PathBuf,
}

impl Context {
    pub fn new(raw: Value, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self, Failure> {
        let Value::Object(mut map) = raw else {
            return Err(Failure::config("config must be a table"));
        };
        let configured = match map.remove("out") {
            None => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => return Err(Failure::config("`out` must be a string")),
        };
        if let Some(seed) = seed {
            map.insert("master_seed".into(), Value::from(seed));
        }
        Ok(Self {
            raw: Value::Object(map),
            out: out.or(configured).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        })
    }

    /// Typed config plus an output sink keyed by its hash. The output
    /// directory is not part of the hash.
    pub fn parse<T: DeserializeOwned + Serialize>(self, command: &str) -> Result<(T, Output), Failure> {
        let typed: T = serde_json::from_value(self.raw).map_err(|e| Failure::config(format!("{command} config: {e}")))?;
        let effective = serde_json::to_value(&typed).map_err(|e| Failure::config(e.to_string()))?;
        let hash = config_hash(&effective);
        let out = Output::create(self.out, command, hash, effective)?;
        Ok((typed, out))
    }
}

fn canonical(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let mut sorted = Map::new();
            for k in keys {
                sorted.insert(k.clone(), canonical(&m[k]));
            }
            Value::Object(sorted)
        }
        Value::Array(a) => Value::Array(a.iter().map(canonical).collect()),
        other => other.clone(),
    }
}

/// SHA-256 of the canonical (sorted-key, compact) JSON form.
pub fn config_hash(v: &Value) -> String {
    let text = serde_json::to_string(&canonical(v)).expect("json values serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn hash_ignores_key_order() {
        let a = json!({"a": 1, "b": {"x": [1.5, 2], "y": "z"}});
        let b = json!({"b": {"y": "z", "x": [1.5, 2]}, "a": 1});
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&json!({"a": 2})));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn seed_override_and_out_removed() {
        let raw = json!({"master_seed": 1, "out": "dir", "n": 3});
        let ctx = Context::new(raw, Some(9), None).unwrap();
        assert_eq!(ctx.raw, json!({"master_seed": 9, "n": 3}));
        assert_eq!(ctx.out, PathBuf::from("dir"));
    }
}
