//! Ptychographic measurement model and synthetic data generators.

pub mod forward;
pub mod phantom;
pub mod probe;
pub mod scan;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub use forward::{
    adjoint_add, apply, embed_patch_add, exit_wave, extract_patch, forward_amplitudes, measure,
    MeasurementSet,
};
pub use phantom::{make_phantom, Phantom, PhantomParams};
pub use probe::{make_probe, Probe};
pub use scan::{grid_for_overlap, jitter_grid, overlap_to_step, raster_grid, Position, ScanGrid};

use crate::error::{Error, Result};
use crate::io::{self, RealImage, Stored};

pub const MANIFEST: &str = "manifest.txt";

fn pattern_name(i: usize) -> String {
    format!("pattern_{i:04}.ptyf")
}

/// Plain-text manifest describing a measurement set.
pub fn manifest_text(m: &MeasurementSet) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n_side = {}", m.grid.object_size);
    let _ = writeln!(s, "probe_width = {}", m.grid.probe_width);
    let _ = writeln!(s, "photon_max = {}", m.photon_max);
    let _ = writeln!(s, "seed = {}", m.seed);
    let _ = writeln!(s, "noiseless = {}", m.noiseless);
    let _ = writeln!(s, "nominal_overlap = {}", m.grid.nominal_overlap);
    let _ = writeln!(s, "achieved_overlap = {}", m.grid.achieved_overlap);
    let _ = writeln!(s, "positions = {}", m.grid.len());
    for (i, (r, c)) in m.grid.positions.iter().enumerate() {
        let _ = writeln!(s, "{i} {r} {c} {}", pattern_name(i));
    }
    s
}

/// Writes `manifest.txt` and one container per scan position into `dir`.
pub fn write_measurements(dir: &Path, m: &MeasurementSet) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let w = m.grid.probe_width;
    for (i, y) in m.patterns.iter().enumerate() {
        let img = RealImage::new(w, w, y.clone())?;
        io::write_stored(&dir.join(pattern_name(i)), &Stored::Real(img))?;
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest_text(m)).map_err(|e| Error::io(&path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Config(format!("{}:{}: {}", path.display(), line + 1, msg.into()))
}

pub fn read_measurements(dir: &Path) -> Result<MeasurementSet> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut kv = std::collections::HashMap::new();
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            kv.insert(k.trim().to_string(), (ln, v.trim().to_string()));
        } else {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(parse_err(&path, ln, "expected `index row col file`"));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|e| parse_err(&path, ln, e.to_string()));
            rows.push((num(parts[1])?, num(parts[2])?, parts[3].to_string()));
        }
    }
    let get = |k: &str| -> Result<&str> {
        kv.get(k)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Config(format!("{}: missing key `{k}`", path.display())))
    };
    let bad = |k: &str| Error::Config(format!("{}: bad value for `{k}`", path.display()));
    let n_side: usize = get("n_side")?.parse().map_err(|_| bad("n_side"))?;
    let w: usize = get("probe_width")?.parse().map_err(|_| bad("probe_width"))?;
    let photon_max: f64 = get("photon_max")?.parse().map_err(|_| bad("photon_max"))?;
    let seed: u64 = get("seed")?.parse().map_err(|_| bad("seed"))?;
    let noiseless: bool = get("noiseless")?.parse().map_err(|_| bad("noiseless"))?;
    let nominal: f64 = get("nominal_overlap")?.parse().map_err(|_| bad("nominal_overlap"))?;
    let achieved: f64 = get("achieved_overlap")?.parse().map_err(|_| bad("achieved_overlap"))?;
    let count: usize = get("positions")?.parse().map_err(|_| bad("positions"))?;
    if rows.len() != count {
        return Err(Error::Config(format!(
            "{}: header announces {count} positions, found {}",
            path.display(),
            rows.len()
        )));
    }
    let mut positions = Vec::with_capacity(count);
    let mut patterns = Vec::with_capacity(count);
    for (r, c, file) in rows {
        positions.push((r, c));
        let img = io::read_stored(&dir.join(&file))?.into_real()?;
        if img.height != w || img.width != w {
            return Err(Error::Dimension(format!(
                "{file}: pattern is {}x{}, expected {w}x{w}",
                img.height, img.width
            )));
        }
        patterns.push(img.data);
    }
    let grid = ScanGrid {
        positions,
        probe_width: w,
        object_size: n_side,
        nominal_overlap: nominal,
        achieved_overlap: achieved,
    };
    grid.check()?;
    Ok(MeasurementSet {
        grid,
        patterns,
        photon_max,
        seed,
        noiseless,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measurement_directory_round_trip() {
        let probe = make_probe(8, 0.35, 0.2).unwrap();
        let ph = make_phantom(16, 4, &PhantomParams::default()).unwrap();
        let grid = grid_for_overlap(16, 8, 0.5).unwrap();
        let amps = forward_amplitudes(&ph.object, &probe, &grid).unwrap();
        let m = measure(&amps, &grid, 1e4, 9, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_measurements(dir.path(), &m).unwrap();
        let back = read_measurements(dir.path()).unwrap();
        assert_eq!(back, m);
    }
}
