use std::path::Path;

use mia_core::datamodel::{write_jsonl, Dataset};
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(mia_core::Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Comment lines for CSV outputs.
pub fn config_comment(config: &Value) -> Vec<String> {
    vec![format!("config: {config}")]
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

/// Writes `ds` as JSONL with the effective config added to its provenance.
pub fn write_dataset(path: &Path, ds: &Dataset, config: &Value) -> CliResult<()> {
    let mut ds = ds.clone();
    ds.provenance.insert("config".into(), config.clone());
    let mut buf = Vec::new();
    write_jsonl(&ds, &mut buf).map_err(|e| io_err(path, e))?;
    write_bytes(path, &buf)
}

/// `{"format": ..., "config": ...}` followed by one JSON object per line.
pub fn write_jsonl_rows<T: Serialize>(
    path: &Path,
    format: &str,
    config: &Value,
    extra: Option<(&str, Value)>,
    rows: &[T],
) -> CliResult<()> {
    let mut header = serde_json::Map::new();
    header.insert("format".into(), format.into());
    header.insert("config".into(), config.clone());
    if let Some((k, v)) = extra {
        header.insert(k.into(), v);
    }
    let mut buf = serde_json::to_vec(&Value::Object(header)).expect("header serializes");
    buf.push(b'\n');
    for r in rows {
        serde_json::to_writer(&mut buf, r).map_err(|e| CliError::Internal(e.to_string()))?;
        buf.push(b'\n');
    }
    write_bytes(path, &buf)
}

/// Writes to `path` when given, otherwise to stdout.
pub fn emit_text(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
