//! Config-file loading and flag/file merging.
//!
//! Every subcommand's argument struct doubles as its config-file table: all
//! fields are optional, flags are overlaid on the file table, and the
//! command fills remaining gaps with its defaults.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

const GROUPS: &[(&str, &[&str])] = &[
    ("score", &[]),
    ("eval", &[]),
    ("ablate", &[]),
    ("ngram", &["build", "overlap", "decon", "filter", "shift"]),
    ("benchmark", &["sample", "temporal"]),
    ("perturb", &["edit", "fpr"]),
    ("toylm", &["synth", "train", "score"]),
];

#[derive(Debug, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Core(mia_core::Error::Io {
                path: path.to_owned(),
                source: e,
            })
        })?;
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config file: {}", e.message())))?;
        for (key, value) in &table {
            if key == "workers" {
                continue;
            }
            let Some((_, subs)) = GROUPS.iter().find(|(g, _)| g == key) else {
                return Err(CliError::Usage(format!("config file: unknown table `{key}`")));
            };
            if !subs.is_empty() {
                let inner = value.as_table().ok_or_else(|| {
                    CliError::Usage(format!("config file: `{key}` must be a table"))
                })?;
                if let Some(k) = inner.keys().find(|k| !subs.contains(&k.as_str())) {
                    return Err(CliError::Usage(format!("config file: unknown table `{key}.{k}`")));
                }
            }
        }
        let file = ConfigFile { table };
        crate::commands::validate_config(&file)?;
        Ok(file)
    }

    pub fn workers(&self) -> CliResult<Option<usize>> {
        match self.table.get("workers") {
            None => Ok(None),
            Some(v) => v
                .as_integer()
                .and_then(|i| usize::try_from(i).ok())
                .map(Some)
                .ok_or_else(|| CliError::Usage("config file: `workers` must be a positive integer".into())),
        }
    }

    /// The table at `path` deserialized into `T`; unknown keys are errors.
    pub fn section<T: DeserializeOwned>(&self, path: &[&str]) -> CliResult<Option<T>> {
        let mut cur: Option<&toml::Value> = None;
        let mut table = &self.table;
        for (i, key) in path.iter().enumerate() {
            match table.get(*key) {
                None => return Ok(None),
                Some(v) if i + 1 == path.len() => cur = Some(v),
                Some(toml::Value::Table(t)) => table = t,
                Some(_) => return Ok(None),
            }
        }
        cur.map(|v| {
            v.clone()
                .try_into::<T>()
                .map_err(|e| CliError::Usage(format!("config file [{}]: {}", path.join("."), e.message())))
        })
        .transpose()
    }
}

/// Flags over file values; a flag counts as set when it serializes to
/// something other than null.
pub fn merge<T: Serialize + DeserializeOwned>(flags: T, file: Option<T>) -> CliResult<T> {
    let Some(file) = file else {
        return Ok(flags);
    };
    let mut base = to_json(&file)?;
    if let (Value::Object(base), Value::Object(over)) = (&mut base, to_json(&flags)?) {
        for (k, v) in over {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| CliError::Internal(e.to_string()))
}

pub fn load<T: Serialize + DeserializeOwned>(flags: T, file: &ConfigFile, path: &[&str]) -> CliResult<T> {
    merge(flags, file.section(path)?)
}

fn to_json<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Internal(e.to_string()))
}

/// The resolved configuration as embedded in outputs: output locations and
/// anything else in `omit` are dropped so that moving outputs does not change
/// their bytes.
pub fn effective<T: Serialize>(command: &str, cfg: &T, omit: &[&str]) -> CliResult<Value> {
    let mut v = to_json(cfg)?;
    if let Value::Object(m) = &mut v {
        for k in omit {
            m.remove(*k);
        }
        m.retain(|_, v| !v.is_null());
        m.insert("command".into(), command.into());
    }
    Ok(v)
}

pub fn require<T: Clone>(v: &Option<T>, flag: &str) -> CliResult<T> {
    v.clone()
        .ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}
