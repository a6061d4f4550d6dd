//! Experiment orchestration: configuration, training, scenario
//! evaluation, checkpoints and the m_R sweep.

mod checkpoint;
mod config;
mod eval;
mod model;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::{ExperimentConfig, Preset, Variant};
pub use eval::{
    accuracy, discriminative_enrichment, evaluate, export_traces, format_tables, traces, MetricsTable,
    ScenarioMetrics,
};
pub use model::{Inference, Model};
pub use train::{train, train_with, training_sequences, EpochLog, TrainHooks, TrainOutcome};

use crate::error::{Error, Result};
use crate::rhythm::{generate_dataset, Dataset};

/// The dataset named by the config: `data_dir` if set, else the synthetic
/// preset generated from `data_seed`.
pub fn load_data(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.data_dir {
        Some(dir) => Dataset::load(dir),
        None => generate_dataset(&config.preset.spec(), config.data_seed),
    }
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub m_r: f64,
    pub best_epoch: usize,
    pub metrics: MetricsTable,
}

/// One train + test-set evaluation per `m_R` value, all with the same seed.
pub fn sweep_mr(config: &ExperimentConfig, data: &Dataset, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one m_R value".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(Error::Config(format!("m_R value {v} outside (0, 1)")));
    }
    values
        .iter()
        .map(|&m_r| {
            let cfg = ExperimentConfig { m_r, ..config.clone() };
            let outcome = train(&cfg, data)?;
            let metrics = evaluate(&outcome.model, &data.test, &cfg.scenario_specs())?;
            Ok(SweepRow { m_r, best_epoch: outcome.best_epoch, metrics })
        })
        .collect()
}

/// Sweep results as a table with one row per `m_R`.
pub fn format_sweep(rows: &[SweepRow]) -> String {
    let labelled: Vec<(String, &MetricsTable)> = rows.iter().map(|r| (format!("m_R={}", r.m_r), &r.metrics)).collect();
    format_tables(&labelled)
}
