use std::process::ExitCode;

use mia_core::Error as CoreError;
use serde_json::{json, Map, Value};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(CoreError),
    Internal(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParam { .. } => CliError::Usage(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_data_error() || matches!(e, CoreError::Io { .. }) => 2,
            CliError::Core(_) | CliError::Internal(_) => 3,
        })
    }

    fn to_json(&self) -> Map<String, Value> {
        let mut m = Map::new();
        match self {
            CliError::Usage(msg) => {
                m.insert("error".into(), "usage".into());
                m.insert("message".into(), msg.clone().into());
            }
            CliError::Internal(msg) => {
                m.insert("error".into(), "internal".into());
                m.insert("message".into(), msg.clone().into());
            }
            CliError::Core(e) => {
                let kind = match e {
                    CoreError::Schema { .. } => "schema",
                    CoreError::Record { .. } => "record",
                    CoreError::MissingInput { .. } => "missing_input",
                    CoreError::InvalidParam { .. } => "invalid_param",
                    CoreError::Empty(_) => "empty",
                    CoreError::DuplicateId(_) => "duplicate_id",
                    CoreError::IndexFormat { .. } => "index_format",
                    CoreError::Io { .. } => "io",
                    CoreError::Compression(_) | CoreError::Other(_) => "internal",
                };
                let category = if kind == "internal" { "internal" } else { "data" };
                m.insert("error".into(), category.into());
                m.insert("kind".into(), kind.into());
                m.insert("message".into(), e.to_string().into());
                match e {
                    CoreError::Schema { line, field, .. } => {
                        m.insert("line".into(), json!(line));
                        m.insert("field".into(), json!(field));
                    }
                    CoreError::Record { record_id, .. } => {
                        m.insert("record_id".into(), json!(record_id));
                    }
                    CoreError::MissingInput {
                        record_id, attack, ..
                    } => {
                        m.insert("record_id".into(), json!(record_id));
                        m.insert("attack".into(), json!(attack));
                    }
                    CoreError::DuplicateId(id) => {
                        m.insert("record_id".into(), json!(id));
                    }
                    CoreError::IndexFormat { path, .. } | CoreError::Io { path, .. } => {
                        m.insert("path".into(), json!(path.display().to_string()));
                    }
                    _ => {}
                }
            }
        }
        m
    }

    /// One JSON object on one line of stderr.
    pub fn report(&self) {
        eprintln!("{}", Value::Object(self.to_json()));
    }

    pub fn report_with_detail(&self, detail: &str) {
        let mut m = self.to_json();
        m.insert("detail".into(), detail.into());
        eprintln!("{}", Value::Object(m));
    }
}

pub type CliResult<T> = Result<T, CliError>;
