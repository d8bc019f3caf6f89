use std::fmt::Write as _;
use std::path::PathBuf;

use super::evaluate::summarize;
use super::{
    cmd_evaluate, cmd_reconstruct, cmd_simulate, cmd_train, is_non_empty, write_resolved, write_text, EvalSummary,
    ExperimentConfig, Layout, MethodKind, RunOptions, TrainSummary,
};
use crate::error::{Error, Result};

pub const TABLE_FILE: &str = "table.csv";
pub const GENERALIZATION_FILE: &str = "generalization.csv";

#[derive(Clone, Debug)]
pub struct SweepSummary {
    pub eval: EvalSummary,
    pub train: Option<TrainSummary>,
    pub table_csv: String,
    pub generalization_csv: String,
    pub table_path: PathBuf,
}

/// Mean and spread of each metric per method and overlap on raster scans.
pub fn table_csv(eval: &EvalSummary, methods: &[MethodKind], overlaps: &[f64]) -> String {
    let mut s = String::from("method,overlap,nrmse_mean,nrmse_std,ssim_mean,ssim_std\n");
    for &m in methods {
        for &ov in overlaps {
            let rows = eval.rows_for(m, Layout::Raster, ov);
            if rows.is_empty() {
                continue;
            }
            let (n, ss) = summarize(&rows);
            let _ = writeln!(s, "{},{ov},{:.6},{:.6},{:.6},{:.6}", m.name(), n.mean, n.std, ss.mean, ss.std);
        }
    }
    s
}

/// Raster against jittered scans at each jittered overlap.
pub fn generalization_csv(eval: &EvalSummary, methods: &[MethodKind], overlaps: &[f64]) -> String {
    let mut s = String::from("method,overlap,layout,nrmse_mean,nrmse_std,ssim_mean,ssim_std\n");
    for &m in methods {
        for &ov in overlaps {
            for layout in [Layout::Raster, Layout::Jitter] {
                let rows = eval.rows_for(m, layout, ov);
                if rows.is_empty() {
                    continue;
                }
                let (n, ss) = summarize(&rows);
                let _ = writeln!(
                    s,
                    "{},{ov},{},{:.6},{:.6},{:.6},{:.6}",
                    m.name(),
                    layout.name(),
                    n.mean,
                    n.std,
                    ss.mean,
                    ss.std
                );
            }
        }
    }
    s
}

/// Simulates the dataset, trains the denoiser once, reconstructs with every
/// configured method and writes the comparison tables.
pub fn cmd_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SweepSummary> {
    cfg.validate()?;
    if cfg.sweep_methods.is_empty() {
        return Err(Error::Config("sweep_methods must list at least one method".into()));
    }
    if is_non_empty(&cfg.output_dir)? && !opts.force {
        return Err(Error::Config(format!(
            "{} is not empty; pass --force to overwrite",
            cfg.output_dir.display()
        )));
    }
    let forced = RunOptions { force: true, ..*opts };
    cmd_simulate(cfg, &forced)?;
    let train = if cfg.sweep_methods.contains(&MethodKind::Diffusion) {
        let mut train_cfg = cfg.clone();
        train_cfg.resume = false;
        Some(cmd_train(&train_cfg, &forced)?)
    } else {
        None
    };
    let recon = cfg.recon_dir();
    if recon.exists() {
        std::fs::remove_dir_all(&recon).map_err(|e| Error::io(&recon, e))?;
    }
    let mut methods = cfg.sweep_methods.clone();
    methods.sort();
    methods.dedup();
    for &m in &methods {
        cmd_reconstruct(cfg, m, &forced)?;
    }
    let eval = cmd_evaluate(&recon, &cfg.dataset_dir(), &cfg.report_dir(), true)?;
    let reports = cfg.report_dir();
    write_resolved(&reports, cfg)?;
    let table = table_csv(&eval, &methods, &cfg.overlaps);
    let general = generalization_csv(&eval, &methods, &cfg.jitter_overlaps);
    let table_path = reports.join(TABLE_FILE);
    write_text(&table_path, &table)?;
    write_text(&reports.join(GENERALIZATION_FILE), &general)?;
    for ((m, layout, pct), rows) in eval.groups() {
        let (n, s) = summarize(&rows);
        log::info!(
            "{} {} {pct}%: NRMSE {:.4} ± {:.4}, SSIM {:.4} ± {:.4}",
            m.name(),
            layout.name(),
            n.mean,
            n.std,
            s.mean,
            s.std
        );
    }
    Ok(SweepSummary {
        eval,
        train,
        table_csv: table,
        generalization_csv: general,
        table_path,
    })
}
