use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::simulate::{read_index, SetEntry, PROBE_FILE};
use super::training::MODEL_FILE;
use super::{pool, prepare_dir, write_resolved, write_text, ExperimentConfig, MethodKind, RunOptions};
use crate::denoiser::{load_params, TinyUNet};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::guided::reconstruct_object;
use crate::io;
use crate::model::{read_measurements, Probe};
use crate::solvers::{solve, Method};

pub const OBJECT_FILE: &str = "object.ptyf";
pub const INFO_FILE: &str = "info.txt";

#[derive(Clone, Debug)]
pub struct ReconSummary {
    pub method: MethodKind,
    pub dir: PathBuf,
    pub sets: usize,
}

/// Directory holding one reconstruction.
pub fn recon_path(recon_dir: &Path, method: MethodKind, entry: &SetEntry) -> PathBuf {
    recon_dir.join(method.name()).join(entry.layout.name()).join(&entry.id)
}

fn info_text(method: MethodKind, entry: &SetEntry) -> String {
    format!(
        "method = {}\nlayout = {}\nid = {}\nphantom = {}\noverlap = {}\n",
        method.name(),
        entry.layout.name(),
        entry.id,
        entry.phantom,
        entry.overlap
    )
}

fn run_one(
    cfg: &ExperimentConfig,
    method: MethodKind,
    dataset: &Path,
    probe: &Probe,
    net: Option<&TinyUNet<f32>>,
    entry: &SetEntry,
    seed: u64,
) -> Result<(ComplexField, String)> {
    let meas = read_measurements(&entry.dir(dataset))?;
    match method {
        MethodKind::Rpie | MethodKind::Awf => {
            let m = if method == MethodKind::Rpie { Method::Rpie } else { Method::Awf };
            let tr = solve(m, &meas, probe, &cfg.solver_config(seed))?;
            Ok((tr.object.clone(), tr.to_csv()))
        }
        MethodKind::Diffusion => {
            let net = net.expect("diffusion runs with a loaded network");
            let schedule = cfg.schedule()?;
            let (obj, rec) = reconstruct_object(&meas, probe, net, &schedule, &cfg.guidance_config(seed))?;
            Ok((obj, rec.trace_csv()))
        }
    }
}

/// Reconstructs every measurement set in the dataset with `method`.
pub fn cmd_reconstruct(cfg: &ExperimentConfig, method: MethodKind, opts: &RunOptions) -> Result<ReconSummary> {
    cfg.validate()?;
    let dataset = cfg.dataset_dir();
    let sets = read_index(&dataset)?;
    let probe = Probe::new(io::read_field(&dataset.join(PROBE_FILE))?)?;
    let net = if method == MethodKind::Diffusion {
        let path = cfg.model_dir().join(MODEL_FILE);
        if !path.exists() {
            return Err(Error::Config(format!(
                "no trained denoiser at {}; run train first",
                path.display()
            )));
        }
        Some(load_params::<f32>(&path)?)
    } else {
        None
    };
    let out = cfg.recon_dir().join(method.name());
    prepare_dir(&out, opts.force)?;
    write_resolved(&out, cfg)?;
    let recon_dir = cfg.recon_dir();
    pool(opts.jobs)?.install(|| {
        sets.par_iter().enumerate().try_for_each(|(k, entry)| {
            let start = Instant::now();
            let seed = cfg.seed.wrapping_add(k as u64);
            let (obj, trace) = run_one(cfg, method, &dataset, &probe, net.as_ref(), entry, seed)?;
            let dir = recon_path(&recon_dir, method, entry);
            write_text(&dir.join(INFO_FILE), &info_text(method, entry))?;
            write_text(&dir.join("trace.csv"), &trace)?;
            io::write_field(&dir.join(OBJECT_FILE), &obj)?;
            let n = obj.height();
            io::export_pgm(&dir.join("amplitude.pgm"), n, obj.width(), &obj.amplitude())?;
            io::export_pgm(&dir.join("phase.pgm"), n, obj.width(), &obj.phase())?;
            log::info!(
                "{} {} {}: {:.1}s",
                method.name(),
                entry.layout.name(),
                entry.id,
                start.elapsed().as_secs_f64()
            );
            Ok::<_, Error>(())
        })
    })?;
    Ok(ReconSummary {
        method,
        dir: out,
        sets: sets.len(),
    })
}
