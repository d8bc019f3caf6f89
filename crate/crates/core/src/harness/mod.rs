//! End-to-end experiment commands: simulate, train, reconstruct, evaluate
//! and the full sweep. Every command writes into its own directory under the
//! configured output directory and refuses to clobber existing results unless
//! forced.

mod config;
mod evaluate;
mod reconstruct;
mod simulate;
mod sweep;
mod training;

pub use config::{ExperimentConfig, MethodKind};
pub use evaluate::{cmd_evaluate, EvalRow, EvalSummary};
pub use reconstruct::{cmd_reconstruct, recon_path, ReconSummary, INFO_FILE, OBJECT_FILE};
pub use simulate::{cmd_simulate, phantom_path, read_index, train_dir, Layout, SetEntry, SimulateSummary, INDEX, PROBE_FILE};
pub use sweep::{cmd_sweep, SweepSummary, GENERALIZATION_FILE, TABLE_FILE};
pub use training::{cmd_train, load_training_images, TrainSummary, CHECKPOINT_FILE, LOG_FILE, MODEL_FILE};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Replace existing results instead of refusing.
    pub force: bool,
    /// Worker threads for independent reconstructions.
    pub jobs: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { force: false, jobs: 1 }
    }
}

fn is_non_empty(dir: &Path) -> Result<bool> {
    match fs::read_dir(dir) {
        Ok(mut it) => Ok(it.next().is_some()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
        Err(e) => Err(Error::io(dir, e)),
    }
}

/// Creates `dir`, clearing it first when forced and refusing when it
/// already holds files otherwise.
fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if is_non_empty(dir)? {
        if !force {
            return Err(Error::Config(format!(
                "{} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_resolved(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    write_text(&dir.join("config.txt"), &cfg.to_text())
}

/// `p003_ov25` for phantom 3 at 25% overlap.
pub fn measurement_id(phantom: usize, overlap: f64) -> String {
    format!("p{phantom:03}_ov{:02}", (overlap * 100.0).round() as u32)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))
}
