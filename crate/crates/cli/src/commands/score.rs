use std::path::PathBuf;

use clap::Args;
use mia_core::attacks::{
    score_dataset, AttackKind, AttackSpec, MinKParams, ScoreOptions, SkipPolicy, DEFAULT_MINK_PERCENT,
};
use mia_core::datamodel::Schema;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{load_dataset, table_format, TableFormat};
use crate::config::{self, require, ConfigFile};
use crate::error::{CliError, CliResult};
use crate::output;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreArgs {
    /// Scored records (JSONL)
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Score table; `.csv` for CSV, anything else for JSONL
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Comma-separated attacks [default: loss,ref,zlib,mink,neighborhood]
    #[arg(long, value_delimiter = ',')]
    pub attacks: Option<Vec<AttackKind>>,
    /// Min-k% percentage [default: 20]
    #[arg(long)]
    pub k: Option<f64>,
    /// Reference-model records (JSONL) merged by id; their mean NLL replaces
    /// inline ref_logprobs
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Fail when a record lacks an attack's inputs instead of skipping it
    #[arg(long)]
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub strict: bool,
}

pub fn run(flags: ScoreArgs, file: &ConfigFile) -> CliResult<()> {
    let mut cfg = config::load(flags, file, &["score"])?;
    let input = require(&cfg.input, "input")?;
    let output_path = require(&cfg.output, "output")?;
    let attacks = cfg.attacks.get_or_insert_with(|| AttackKind::ALL.to_vec()).clone();
    if attacks.is_empty() {
        return Err(CliError::Usage("--attacks must name at least one attack".into()));
    }
    let k = *cfg.k.get_or_insert(DEFAULT_MINK_PERCENT);
    let mink = MinKParams::new(k)?;

    let ds = load_dataset(&input, Schema::Scored)?;
    let reference = cfg
        .reference
        .as_ref()
        .map(|p| load_dataset(p, Schema::Scored))
        .transpose()?;
    let specs: Vec<AttackSpec> = attacks.iter().map(|&a| AttackSpec::from_kind(a, mink)).collect();
    let opts = ScoreOptions {
        policy: if cfg.strict { SkipPolicy::Strict } else { SkipPolicy::Skip },
        reference: reference.as_ref(),
    };
    let table = score_dataset(&ds, &specs, &opts)?;
    if !table.skipped.is_empty() {
        log::warn!(
            "{} (record, attack) pairs skipped for missing inputs",
            table.skipped.len()
        );
    }

    let effective = config::effective("score", &cfg, &["output"])?;
    let mut buf = Vec::new();
    match table_format(&output_path) {
        TableFormat::Csv => {
            let mut comment = output::config_comment(&effective);
            comment.push(format!("skipped: {}", table.skipped.len()));
            table.write_csv(&mut buf, &comment)?;
        }
        TableFormat::Jsonl => {
            let header = json!({
                "format": "mia-scores/1",
                "config": effective,
                "skipped": table
                    .skipped
                    .iter()
                    .map(|(id, a)| json!({"record_id": id, "attack": a}))
                    .collect::<Vec<_>>(),
            });
            table.write_jsonl(&mut buf, Some(&header))?;
        }
    }
    output::write_bytes(&output_path, &buf)
}
