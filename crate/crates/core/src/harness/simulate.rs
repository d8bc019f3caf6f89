use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{measurement_id, prepare_dir, write_resolved, write_text, ExperimentConfig, RunOptions};
use crate::error::{Error, Result};
use crate::field::to_two_channel;
use crate::io::{self, Stored};
use crate::model::{
    forward_amplitudes, grid_for_overlap, jitter_grid, make_phantom, make_probe, measure, write_measurements,
};
use crate::rng::Rng;

pub const INDEX: &str = "index.csv";
pub const PROBE_FILE: &str = "probe.ptyf";

/// Scan layout of a measurement set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layout {
    Raster,
    Jitter,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::Raster => "raster",
            Layout::Jitter => "jitter",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "raster" => Ok(Layout::Raster),
            "jitter" => Ok(Layout::Jitter),
            other => Err(Error::Config(format!("unknown layout `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SetEntry {
    pub id: String,
    pub layout: Layout,
    pub phantom: usize,
    pub overlap: f64,
}

impl SetEntry {
    pub fn dir(&self, dataset: &Path) -> PathBuf {
        dataset.join(self.layout.name()).join(&self.id)
    }
}

#[derive(Clone, Debug)]
pub struct SimulateSummary {
    pub dataset: PathBuf,
    pub sets: Vec<SetEntry>,
}

pub fn phantom_path(dataset: &Path, phantom: usize) -> PathBuf {
    dataset.join("phantoms").join(format!("p{phantom:03}.ptyf"))
}

pub fn train_dir(dataset: &Path) -> PathBuf {
    dataset.join("train")
}

fn test_phantom_seed(cfg: &ExperimentConfig, i: usize) -> u64 {
    cfg.seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

fn train_phantom_seed(cfg: &ExperimentConfig, i: usize) -> u64 {
    test_phantom_seed(cfg, i).wrapping_add(1 << 32)
}

fn noise_seed(cfg: &ExperimentConfig, i: usize, layout: Layout, overlap: f64) -> u64 {
    let pct = (overlap * 100.0).round() as u64;
    let tag = match layout {
        Layout::Raster => 0,
        Layout::Jitter => 1,
    };
    test_phantom_seed(cfg, i)
        .wrapping_mul(0x9E37_79B9)
        .wrapping_add(pct * 2 + tag)
}

/// Generates phantoms, training images, the probe and every measurement set.
pub fn cmd_simulate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SimulateSummary> {
    cfg.validate()?;
    let dataset = cfg.dataset_dir();
    prepare_dir(&dataset, opts.force)?;
    write_resolved(&dataset, cfg)?;
    let n = cfg.object_size;
    let probe = make_probe(cfg.probe_width, cfg.probe_aperture, cfg.probe_taper)?;
    io::write_field(&dataset.join(PROBE_FILE), probe.field())?;

    std::fs::create_dir_all(dataset.join("phantoms")).map_err(|e| Error::io(&dataset, e))?;
    let phantoms = (0..cfg.phantom_count)
        .map(|i| make_phantom(n, test_phantom_seed(cfg, i), &cfg.phantom).map(|p| p.object))
        .collect::<Result<Vec<_>>>()?;
    for (i, obj) in phantoms.iter().enumerate() {
        let path = phantom_path(&dataset, i);
        io::write_field(&path, obj)?;
        io::export_pgm(&path.with_extension("pgm"), n, n, &obj.amplitude())?;
    }

    let train = train_dir(&dataset);
    std::fs::create_dir_all(&train).map_err(|e| Error::io(&train, e))?;
    (0..cfg.train_images).into_par_iter().try_for_each(|i| {
        let obj = make_phantom(n, train_phantom_seed(cfg, i), &cfg.phantom)?.object;
        let (img, _) = to_two_channel(&obj);
        io::write_stored(&train.join(format!("t{i:04}.ptyf")), &Stored::TwoChannel(img))
    })?;

    let mut jobs = Vec::new();
    for i in 0..cfg.phantom_count {
        for &ov in &cfg.overlaps {
            jobs.push((i, ov, Layout::Raster));
        }
        for &ov in &cfg.jitter_overlaps {
            jobs.push((i, ov, Layout::Jitter));
        }
    }
    let sets = jobs
        .par_iter()
        .map(|&(i, ov, layout)| {
            let mut grid = grid_for_overlap(n, cfg.probe_width, ov)?;
            if layout == Layout::Jitter {
                let mut rng = Rng::new(test_phantom_seed(cfg, i), 0x117E);
                grid = jitter_grid(&grid, cfg.jitter_max_shift, &mut rng);
            }
            let amps = forward_amplitudes(&phantoms[i], &probe, &grid)?;
            let meas = measure(&amps, &grid, cfg.photon_max, noise_seed(cfg, i, layout, ov), cfg.noiseless)?;
            let entry = SetEntry {
                id: measurement_id(i, ov),
                layout,
                phantom: i,
                overlap: ov,
            };
            write_measurements(&entry.dir(&dataset), &meas)?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut index = String::from("id,layout,phantom,overlap\n");
    for s in &sets {
        let _ = writeln!(index, "{},{},{},{}", s.id, s.layout.name(), s.phantom, s.overlap);
    }
    write_text(&dataset.join(INDEX), &index)?;
    log::info!("simulated {} measurement sets in {}", sets.len(), dataset.display());
    Ok(SimulateSummary { dataset, sets })
}

pub fn read_index(dataset: &Path) -> Result<Vec<SetEntry>> {
    let path = dataset.join(INDEX);
    let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Config(format!(
            "no dataset at {}; run simulate first",
            dataset.display()
        )),
        _ => Error::io(&path, e),
    })?;
    let bad = |ln: usize| Error::Config(format!("{}:{}: malformed index row", path.display(), ln + 1));
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(ln, line)| {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(bad(ln));
            }
            Ok(SetEntry {
                id: parts[0].to_string(),
                layout: Layout::parse(parts[1])?,
                phantom: parts[2].parse().map_err(|_| bad(ln))?,
                overlap: parts[3].parse().map_err(|_| bad(ln))?,
            })
        })
        .collect()
}
