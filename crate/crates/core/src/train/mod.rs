//! Staged training protocol, checkpoint layout and evaluation.
//!
//! A run directory holds one subdirectory per stage:
//! `<run>/<stage>/step-NNNNNN.safetensors` with a `.json` sidecar,
//! `log.jsonl` (one line per step) and `report.json`. The estimator
//! fine-tuning stage also writes `env_cache.safetensors`, and the real-data
//! stages their `pseudo.safetensors` targets.

mod config;
mod data;
mod eval;
mod stages;

pub use config::{DataSection, FixtureSource, Stage, StageSection, TrainConfig};
pub use data::{load_env_bank, load_samples, Schedule};
pub use eval::{
    eval_report_json, evaluate, evaluate_decompositions, evaluate_irn, load_irn, load_rar,
    Metric,
};
pub use stages::{
    checkpoint_path, env_cache_path, file_hash, latest_checkpoint, list_checkpoints, load_env_cache,
    pseudo_cache_path, run_stage, StageReport,
};
