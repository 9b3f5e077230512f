//! TOML training configuration files.
//!
//! Every key is optional; missing keys take their defaults. A file may set
//! `preset = "smoke"` to start from the reduced CPU configuration instead.

use crate::error::{Error, Result};
use crate::trainer::TrainConfig;
use std::path::{Path, PathBuf};

/// Training configuration plus the data and output locations of a run.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub train: TrainConfig,
}

fn merge(base: toml::Value, over: toml::Value) -> toml::Value {
    match (base, over) {
        (toml::Value::Table(mut b), toml::Value::Table(o)) => {
            for (k, v) in o {
                let merged = match b.remove(&k) {
                    Some(old) => merge(old, v),
                    None => v,
                };
                b.insert(k, merged);
            }
            toml::Value::Table(b)
        }
        (_, o) => o,
    }
}

pub fn parse_config(text: &str, origin: &Path) -> Result<RunConfig> {
    let bad = |e: String| Error::Config(format!("{}: {e}", origin.display()));
    let mut value: toml::Value = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
    let table = value
        .as_table_mut()
        .ok_or_else(|| bad("top level must be a table".into()))?;
    let preset = table.remove("preset");
    let dataset = table.remove("dataset");
    let output = table.remove("output_dir");
    let base = match preset.as_ref().map(|p| p.as_str()) {
        None | Some(Some("default")) => TrainConfig::default(),
        Some(Some("smoke")) => TrainConfig::smoke(),
        Some(other) => return Err(bad(format!("unknown preset {other:?}"))),
    };
    let base = toml::Value::try_from(&base).map_err(|e| bad(e.to_string()))?;
    let train: TrainConfig = merge(base, value)
        .try_into()
        .map_err(|e: toml::de::Error| bad(e.to_string()))?;
    train.validate()?;
    let path_of = |v: Option<toml::Value>, key: &str| -> Result<Option<PathBuf>> {
        match v {
            None => Ok(None),
            Some(toml::Value::String(s)) => {
                let p = PathBuf::from(s);
                Ok(Some(match origin.parent() {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p,
                }))
            }
            Some(_) => Err(bad(format!("{key} must be a string"))),
        }
    };
    Ok(RunConfig {
        dataset: path_of(dataset, "dataset")?,
        output_dir: path_of(output, "output_dir")?.unwrap_or_else(|| PathBuf::from("runs/latest")),
        train,
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

/// The fully resolved configuration as TOML.
pub fn resolved_toml(config: &TrainConfig) -> String {
    toml::to_string_pretty(config).expect("config serializes")
}
