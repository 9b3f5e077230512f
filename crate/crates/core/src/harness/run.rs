//! The full training loop with checkpoints and a metric log.
//!
//! Output directory layout:
//!
//! ```text
//! config.toml                 resolved configuration
//! metrics.csv                 one row per iteration
//! checkpoints/iter_NNNNNNNN.tpck
//! checkpoints/final.tpck
//! ```

use crate::error::{Error, Result};
use crate::harness::checkpoint::{load_checkpoint_for, save_checkpoint};
use crate::harness::config::resolved_toml;
use crate::metrics::{evaluate_state, Embedder};
use crate::trainer::{run_until, StepLog, TrainConfig, TrainData, TrainState};
use log::info;
use serde::Serialize;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "final.tpck";

/// Offset mixed into the run seed for evaluation sampling so that metric
/// evaluation never perturbs the training stream.
const EVAL_SEED_OFFSET: u64 = 0x9e37_79b9;

#[derive(Debug, Serialize)]
struct MetricRow {
    epoch: usize,
    iteration: usize,
    d_fake: f64,
    d_real: f64,
    d_r1: f64,
    d_recon: f64,
    d_total: f64,
    g_total: f64,
    real_logit: f64,
    fake_logit: f64,
    kid: Option<f64>,
    diversity: Option<f64>,
}

impl MetricRow {
    fn new(log: &StepLog) -> Self {
        MetricRow {
            epoch: log.epoch,
            iteration: log.iteration,
            d_fake: log.d_fake,
            d_real: log.d_real,
            d_r1: log.d_r1,
            d_recon: log.d_recon,
            d_total: log.d_total,
            g_total: log.g_total,
            real_logit: log.real_logit,
            fake_logit: log.fake_logit,
            kid: None,
            diversity: None,
        }
    }
}

pub fn checkpoint_path(out_dir: &Path, iteration: usize) -> PathBuf {
    out_dir.join(CHECKPOINT_DIR).join(format!("iter_{iteration:08}.tpck"))
}

pub fn final_checkpoint_path(out_dir: &Path) -> PathBuf {
    out_dir.join(CHECKPOINT_DIR).join(FINAL_CHECKPOINT)
}

#[derive(Debug)]
pub struct RunOutcome {
    pub state: TrainState,
    pub final_checkpoint: PathBuf,
    pub metrics_log: PathBuf,
}

/// Train for `config.total_iterations()`, optionally continuing from a
/// checkpoint written under a compatible configuration.
pub fn train(
    config: &TrainConfig,
    data: &TrainData,
    out_dir: &Path,
    resume: Option<&Path>,
    embedder: &dyn Embedder,
) -> Result<RunOutcome> {
    config.validate()?;
    let mut state = match resume {
        Some(path) => {
            let mut s = load_checkpoint_for(path, config)?;
            s.config = config.clone();
            info!("resuming from {} at iteration {}", path.display(), s.iteration);
            s
        }
        None => TrainState::new(config.clone())?,
    };
    std::fs::create_dir_all(out_dir.join(CHECKPOINT_DIR)).map_err(|e| Error::io(out_dir, e))?;
    let config_path = out_dir.join(CONFIG_FILE);
    std::fs::write(&config_path, resolved_toml(config)).map_err(|e| Error::io(&config_path, e))?;

    let metrics_log = out_dir.join(METRICS_FILE);
    let fresh = !metrics_log.exists() || resume.is_none();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&metrics_log)
        .map_err(|e| Error::io(&metrics_log, e))?;
    let mut writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    let csv_err = |e: csv::Error| Error::io(&metrics_log, std::io::Error::other(e));

    let total = config.total_iterations();
    let eval_seed = config.seed.wrapping_add(EVAL_SEED_OFFSET);
    run_until(&mut state, data, total, |state, log| {
        let mut row = MetricRow::new(log);
        let done = state.iteration;
        if config.metrics_every > 0 && (done % config.metrics_every == 0 || done == total) {
            let report = evaluate_state(state, data, embedder, eval_seed)?;
            info!("iteration {done}: kid {:.5} diversity {:.5}", report.kid, report.diversity);
            row.kid = Some(report.kid);
            row.diversity = Some(report.diversity);
        }
        writer.serialize(&row).map_err(csv_err)?;
        writer.flush().map_err(|e| Error::io(&metrics_log, e))?;
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < total {
            save_checkpoint(state, &checkpoint_path(out_dir, done))?;
        }
        Ok(())
    })?;
    let final_checkpoint = final_checkpoint_path(out_dir);
    save_checkpoint(&state, &final_checkpoint)?;
    Ok(RunOutcome {
        state,
        final_checkpoint,
        metrics_log,
    })
}
