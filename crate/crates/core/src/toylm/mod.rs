//! Add-lambda smoothed n-gram language model, a synthetic Markov corpus
//! source, and the epoch / training-size ablations built on them.

mod ablation;
mod model;
mod synth;

pub use ablation::{
    evaluate_level, run_ablation, write_ablation_csv, AblationAxis, AblationConfig, AblationRow,
    ABLATION_ATTACKS,
};
pub use model::{model_tokens, ToyLm, TrainConfig, UNK};
pub use synth::{generate_corpus, Generator, SyntheticSource};
