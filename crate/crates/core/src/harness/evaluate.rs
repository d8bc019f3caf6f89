use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::reconstruct::{INFO_FILE, OBJECT_FILE};
use super::simulate::{phantom_path, Layout};
use super::{prepare_dir, write_text, MethodKind};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{image_metrics, Summary};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub method: MethodKind,
    pub layout: Layout,
    pub overlap: f64,
    pub id: String,
    pub phantom: usize,
    pub nrmse: f64,
    pub ssim: f64,
    pub phase: f64,
}

#[derive(Clone, Debug)]
pub struct EvalSummary {
    /// Sorted by method, layout, overlap and id.
    pub rows: Vec<EvalRow>,
    pub report_dir: PathBuf,
}

/// Group key with the overlap in whole percent so it orders and compares exactly.
pub type GroupKey = (MethodKind, Layout, u32);

impl EvalSummary {
    pub fn groups(&self) -> BTreeMap<GroupKey, Vec<&EvalRow>> {
        let mut g: BTreeMap<GroupKey, Vec<&EvalRow>> = BTreeMap::new();
        for r in &self.rows {
            g.entry((r.method, r.layout, percent(r.overlap))).or_default().push(r);
        }
        g
    }

    pub fn rows_for(&self, method: MethodKind, layout: Layout, overlap: f64) -> Vec<&EvalRow> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.layout == layout && percent(r.overlap) == percent(overlap))
            .collect()
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("method,layout,overlap,id,nrmse,ssim,phase\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6},{:.6}",
                r.method.name(),
                r.layout.name(),
                r.overlap,
                r.id,
                r.nrmse,
                r.ssim,
                r.phase
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("method,layout,overlap,n,nrmse_mean,nrmse_std,ssim_mean,ssim_std\n");
        for ((method, layout, _), rows) in self.groups() {
            let (n, ss) = summarize(&rows);
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                method.name(),
                layout.name(),
                rows[0].overlap,
                rows.len(),
                n.mean,
                n.std,
                ss.mean,
                ss.std
            );
        }
        s
    }
}

pub fn percent(overlap: f64) -> u32 {
    (overlap * 100.0).round() as u32
}

pub fn summarize(rows: &[&EvalRow]) -> (Summary, Summary) {
    let n: Vec<f64> = rows.iter().map(|r| r.nrmse).collect();
    let s: Vec<f64> = rows.iter().map(|r| r.ssim).collect();
    (Summary::of(&n), Summary::of(&s))
}

fn read_info(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

fn info_field<T: std::str::FromStr>(info: &HashMap<String, String>, key: &str, path: &Path) -> Result<T> {
    info.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Config(format!("{}: missing or invalid `{key}`", path.display())))
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Finds every reconstruction below `recon_dir`.
fn collect(recon_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for method in subdirs(recon_dir)? {
        for layout in subdirs(&method)? {
            for item in subdirs(&layout)? {
                if item.join(INFO_FILE).exists() {
                    found.push(item);
                }
            }
        }
    }
    Ok(found)
}

/// Scores each reconstruction against its reference phantom and writes
/// per-image and grouped summaries into `report_dir`.
pub fn cmd_evaluate(recon_dir: &Path, reference_dir: &Path, report_dir: &Path, force: bool) -> Result<EvalSummary> {
    if !recon_dir.is_dir() {
        return Err(Error::Config(format!("no reconstructions at {}", recon_dir.display())));
    }
    let items = collect(recon_dir)?;
    if items.is_empty() {
        return Err(Error::Config(format!("no reconstructions found under {}", recon_dir.display())));
    }
    let mut pending = Vec::new();
    let mut missing = Vec::new();
    for dir in &items {
        let info_path = dir.join(INFO_FILE);
        let info = read_info(&info_path)?;
        let method: MethodKind = info_field::<String>(&info, "method", &info_path)?.parse()?;
        let layout = match info_field::<String>(&info, "layout", &info_path)?.as_str() {
            "raster" => Layout::Raster,
            "jitter" => Layout::Jitter,
            other => return Err(Error::Config(format!("{}: unknown layout `{other}`", info_path.display()))),
        };
        let id: String = info_field(&info, "id", &info_path)?;
        let phantom: usize = info_field(&info, "phantom", &info_path)?;
        let overlap: f64 = info_field(&info, "overlap", &info_path)?;
        let reference = phantom_path(reference_dir, phantom);
        if !reference.exists() {
            missing.push(id);
            continue;
        }
        pending.push((dir.clone(), reference, method, layout, id, phantom, overlap));
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingIds(missing));
    }
    let mut rows = pending
        .into_iter()
        .map(|(dir, reference, method, layout, id, phantom, overlap)| {
            let est = io::read_field(&dir.join(OBJECT_FILE))?;
            let refc = io::read_field(&reference)?;
            let m = image_metrics(&est, &refc)?;
            Ok(EvalRow {
                method,
                layout,
                overlap,
                id,
                phantom,
                nrmse: m.nrmse,
                ssim: m.ssim,
                phase: m.phase,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        (a.method, a.layout, percent(a.overlap), &a.id).cmp(&(b.method, b.layout, percent(b.overlap), &b.id))
    });
    prepare_dir(report_dir, force)?;
    let summary = EvalSummary {
        rows,
        report_dir: report_dir.to_path_buf(),
    };
    write_text(&report_dir.join("metrics.csv"), &summary.metrics_csv())?;
    write_text(&report_dir.join("summary.csv"), &summary.summary_csv())?;
    Ok(summary)
}
