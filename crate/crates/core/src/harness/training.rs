use std::path::{Path, PathBuf};

use super::simulate::train_dir;
use super::{prepare_dir, write_resolved, write_text, ExperimentConfig, RunOptions};
use crate::denoiser::{log_csv, save_params, StepRecord, TinyUNet, Trainer};
use crate::error::{Error, Result};
use crate::field::TwoChannelImage;
use crate::io;

pub const MODEL_FILE: &str = "denoiser.ptyp";
pub const CHECKPOINT_FILE: &str = "checkpoint.ptyc";
pub const LOG_FILE: &str = "train_log.csv";

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub model: PathBuf,
    pub steps: usize,
    pub resumed_from: Option<usize>,
    pub final_loss: Option<f64>,
}

pub fn load_training_images(dataset: &Path) -> Result<Vec<TwoChannelImage>> {
    let dir = train_dir(dataset);
    let entries = std::fs::read_dir(&dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Config(format!(
            "no training images at {}; run simulate first",
            dir.display()
        )),
        _ => Error::io(&dir, e),
    })?;
    let mut paths = entries
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(&dir, err)))
        .collect::<Result<Vec<_>>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "ptyf"));
    paths.sort();
    paths
        .iter()
        .map(|p| io::read_stored(p)?.into_two_channel())
        .collect()
}

fn parse_log(text: &str, before: usize) -> Vec<StepRecord> {
    text.lines()
        .skip(1)
        .filter_map(|l| {
            let mut it = l.split(',');
            let step = it.next()?.parse().ok()?;
            let loss = it.next()?.parse().ok()?;
            let wall_time = it.next()?.parse().ok()?;
            Some(StepRecord { step, loss, wall_time })
        })
        .filter(|r| r.step < before)
        .collect()
}

/// Trains the denoiser on augmented patches of the simulated training
/// images, checkpointing periodically. With `resume` set, training
/// continues from the checkpoint in the model directory.
pub fn cmd_train(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<TrainSummary> {
    cfg.validate()?;
    let sources = load_training_images(&cfg.dataset_dir())?;
    let dir = cfg.model_dir();
    let ckpt = dir.join(CHECKPOINT_FILE);
    let schedule = cfg.schedule()?;
    let train_cfg = cfg.train_config();

    let (mut trainer, resumed_from) = if cfg.resume && ckpt.exists() && !opts.force {
        let mut t = Trainer::<f32>::load_checkpoint(&ckpt)?;
        if t.net.config() != &cfg.unet_config() {
            return Err(Error::Config(format!(
                "checkpoint {} was written for a different network configuration",
                ckpt.display()
            )));
        }
        if let Ok(text) = std::fs::read_to_string(dir.join(LOG_FILE)) {
            t.log = parse_log(&text, t.step());
        }
        let from = t.step();
        (t, Some(from))
    } else {
        prepare_dir(&dir, opts.force)?;
        (Trainer::new(TinyUNet::<f32>::new(cfg.unet_config(), cfg.seed)?), None)
    };
    write_resolved(&dir, cfg)?;

    let every = cfg.checkpoint_every;
    trainer.run(&sources, &cfg.augmentation(), &schedule, &train_cfg, |t| {
        let k = t.step();
        if every > 0 && k % every == 0 {
            t.save_checkpoint(&ckpt)?;
            write_text(&dir.join(LOG_FILE), &log_csv(&t.log))?;
        }
        Ok(())
    })?;
    trainer.save_checkpoint(&ckpt)?;
    write_text(&dir.join(LOG_FILE), &log_csv(&trainer.log))?;
    let model = dir.join(MODEL_FILE);
    save_params(&trainer.net, &model)?;
    Ok(TrainSummary {
        model,
        steps: trainer.step(),
        resumed_from,
        final_loss: trainer.log.last().map(|r| r.loss),
    })
}
