//! Flag values layered over an optional TOML config file.
//!
//! The file has top-level global keys (`jobs`) and one table per
//! subcommand, keyed like the long flags with `_` for `-`. Flags given on the
//! command line win.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Failure;

pub const SECTIONS: [&str; 7] = [
    "train", "synth", "tune", "bench", "codegen", "layout", "report",
];

#[derive(Debug, Default, Deserialize)]
pub struct ConfigFile {
    pub jobs: Option<usize>,
    #[serde(flatten)]
    pub sections: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Failure::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: ConfigFile = toml::from_str(&text)
            .map_err(|e| Failure::validation(format!("config {}: {e}", path.display())))?;
        for (key, value) in &cfg.sections {
            if !SECTIONS.contains(&key.as_str()) {
                return Err(Failure::validation(format!("config: unknown key `{key}`")));
            }
            if !value.is_table() {
                return Err(Failure::validation(format!(
                    "config: `{key}` must be a table"
                )));
            }
        }
        Ok(cfg)
    }

    /// Config-file values for `section`, overridden by every flag set in
    /// `flags`, decoded into the fully defaulted settings type.
    pub fn resolve<F: Serialize, S: DeserializeOwned>(
        &self,
        section: &str,
        flags: &F,
    ) -> Result<S, Failure> {
        let mut merged = match self.sections.get(section) {
            Some(table) => {
                serde_json::to_value(table).map_err(|e| Failure::internal(e.to_string()))?
            }
            None => serde_json::Value::Object(Default::default()),
        };
        let overrides =
            serde_json::to_value(flags).map_err(|e| Failure::internal(e.to_string()))?;
        if let (Some(base), serde_json::Value::Object(over)) = (merged.as_object_mut(), overrides) {
            for (k, v) in over {
                if !v.is_null() {
                    base.insert(k, v);
                }
            }
        }
        serde_json::from_value(merged).map_err(|e| Failure::validation(format!("{section}: {e}")))
    }
}
