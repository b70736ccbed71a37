use std::path::PathBuf;

use clap::Args;
use mia_core::toylm::{run_ablation, write_ablation_csv, AblationAxis, AblationConfig, SyntheticSource};
use serde::{Deserialize, Serialize};

use crate::config::{self, require, ConfigFile};
use crate::error::CliResult;
use crate::output;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateArgs {
    /// epochs or train_size
    #[arg(long)]
    pub axis: Option<AblationAxis>,
    /// Comma-separated levels [default: 1,2,4,8 for epochs; 1000,10000,100000 for train_size]
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<u64>>,
    /// Result table (CSV)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write the full per-level reports (JSON)
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Model order, context length + 1 [default: 3]
    #[arg(long)]
    pub order: Option<usize>,
    /// Add-lambda smoothing [default: 1]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Epochs when the axis is train_size [default: 1]
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Training documents when the axis is epochs [default: 1000]
    #[arg(long)]
    pub train_size: Option<usize>,
    /// Benchmark records per class [default: 500]
    #[arg(long)]
    pub members: Option<usize>,
    /// Reference-model training documents [default: 1000]
    #[arg(long)]
    pub reference_train_size: Option<usize>,
    /// Min-k% percentage [default: 20]
    #[arg(long)]
    pub k: Option<f64>,
    /// Bootstrap iterations [default: 1000]
    #[arg(long)]
    pub n_boot: Option<usize>,
    /// Top-level seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Synthetic language; config file only
    #[arg(skip)]
    pub source: Option<SyntheticSource>,
}

fn default_levels(axis: AblationAxis) -> Vec<u64> {
    match axis {
        AblationAxis::Epochs => vec![1, 2, 4, 8],
        AblationAxis::TrainSize => vec![1000, 10_000, 100_000],
    }
}

pub fn run(flags: AblateArgs, file: &ConfigFile) -> CliResult<()> {
    let mut cfg = config::load(flags, file, &["ablate"])?;
    let axis = require(&cfg.axis, "axis")?;
    let out = require(&cfg.output, "output")?;
    let levels = cfg.levels.get_or_insert_with(|| default_levels(axis)).clone();
    let d = AblationConfig::default();
    let ab = AblationConfig {
        order: *cfg.order.get_or_insert(d.order),
        lambda: *cfg.lambda.get_or_insert(d.lambda),
        epochs: *cfg.epochs.get_or_insert(d.epochs),
        train_size: *cfg.train_size.get_or_insert(d.train_size),
        members_per_class: *cfg.members.get_or_insert(d.members_per_class),
        reference_train_size: *cfg.reference_train_size.get_or_insert(d.reference_train_size),
        mink_percent: *cfg.k.get_or_insert(d.mink_percent),
        n_boot: *cfg.n_boot.get_or_insert(d.n_boot),
        seed: *cfg.seed.get_or_insert(d.seed),
        source: cfg.source.get_or_insert(d.source).clone(),
    };
    let rows = run_ablation(axis, &levels, &ab)?;
    let effective = config::effective("ablate", &cfg, &["output", "report"])?;
    let mut buf = Vec::new();
    write_ablation_csv(&rows, &mut buf, &output::config_comment(&effective))?;
    output::write_bytes(&out, &buf)?;
    if let Some(p) = &cfg.report {
        output::write_json(p, &serde_json::json!({"config": effective, "rows": rows}))?;
    }
    Ok(())
}
