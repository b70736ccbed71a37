use std::path::PathBuf;

use clap::Args;
use mia_core::attacks::AttackKind;
use mia_core::datamodel::Schema;
use mia_core::metrics::{bootstrap_eval, write_summary_csv, BootstrapConfig, DEFAULT_N_BOOT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{load_dataset, read_score_table};
use crate::config::{self, require, ConfigFile};
use crate::error::{CliError, CliResult};
use crate::output;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    /// Score table written by `score` (CSV or JSONL)
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Labeled records the scores belong to; log-probs are not required
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory for report_<attack>.json and summary.csv
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Bootstrap iterations [default: 1000]
    #[arg(long)]
    pub n_boot: Option<usize>,
    /// Bootstrap seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated FPR targets for TPR@FPR [default: 0.01]
    #[arg(long, value_delimiter = ',')]
    pub fpr: Option<Vec<f64>>,
    /// Attacks to evaluate [default: every attack in the score table]
    #[arg(long, value_delimiter = ',')]
    pub attacks: Option<Vec<AttackKind>>,
}

pub fn run(flags: EvalArgs, file: &ConfigFile) -> CliResult<()> {
    let mut cfg = config::load(flags, file, &["eval"])?;
    let scores_path = require(&cfg.scores, "scores")?;
    let data_path = require(&cfg.data, "data")?;
    let out_dir = require(&cfg.output_dir, "output-dir")?;
    let n_boot = *cfg.n_boot.get_or_insert(DEFAULT_N_BOOT);
    let seed = *cfg.seed.get_or_insert(0);
    let fpr = cfg.fpr.get_or_insert_with(|| vec![0.01]).clone();

    let table = read_score_table(&scores_path)?;
    let ds = load_dataset(&data_path, Schema::Unscored)?;
    let attacks = cfg.attacks.get_or_insert_with(|| table.attacks()).clone();
    if attacks.is_empty() {
        return Err(CliError::Usage("no attacks to evaluate".into()));
    }
    let boot = BootstrapConfig {
        n_boot,
        seed,
        fpr_targets: fpr,
    };
    let reports = attacks
        .par_iter()
        .map(|&a| bootstrap_eval(&table, &ds, a, &boot))
        .collect::<Result<Vec<_>, _>>()?;

    std::fs::create_dir_all(&out_dir).map_err(|e| {
        CliError::Core(mia_core::Error::Io {
            path: out_dir.clone(),
            source: e,
        })
    })?;
    let effective = config::effective("eval", &cfg, &["output_dir"])?;
    for r in &reports {
        output::write_json(
            &out_dir.join(format!("report_{}.json", r.attack)),
            &json!({"config": effective, "report": r}),
        )?;
    }
    let mut buf = Vec::new();
    write_summary_csv(&reports, &mut buf, &output::config_comment(&effective))?;
    output::write_bytes(&out_dir.join("summary.csv"), &buf)
}
