pub mod ablate;
pub mod bench;
pub mod eval;
pub mod ngram;
pub mod perturb;
pub mod score;
pub mod toylm;

use std::path::Path;

use mia_core::attacks::ScoreTable;
use mia_core::datamodel::{load_jsonl_with, Dataset, Schema};

use crate::config::ConfigFile;
use crate::error::{CliError, CliResult};

/// Checks every table present in the file against its subcommand's schema.
pub fn validate_config(file: &ConfigFile) -> CliResult<()> {
    file.section::<score::ScoreArgs>(&["score"])?;
    file.section::<eval::EvalArgs>(&["eval"])?;
    file.section::<ablate::AblateArgs>(&["ablate"])?;
    ngram::validate_config(file)?;
    bench::validate_config(file)?;
    perturb::validate_config(file)?;
    toylm::validate_config(file)?;
    Ok(())
}

pub fn load_dataset(path: &Path, schema: Schema) -> CliResult<Dataset> {
    Ok(load_jsonl_with(path, schema)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Jsonl,
}

/// `.csv` selects CSV, anything else JSONL.
pub fn table_format(path: &Path) -> TableFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => TableFormat::Csv,
        _ => TableFormat::Jsonl,
    }
}

pub fn read_score_table(path: &Path) -> CliResult<ScoreTable> {
    let file = std::fs::File::open(path).map_err(|e| {
        CliError::Core(mia_core::Error::Io {
            path: path.to_owned(),
            source: e,
        })
    })?;
    let table = match table_format(path) {
        TableFormat::Csv => ScoreTable::read_csv(file)?,
        TableFormat::Jsonl => ScoreTable::read_jsonl(std::io::BufReader::new(file))?,
    };
    Ok(table)
}
