//! Scan geometry: raster grids, overlap bookkeeping and position jitter.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Top-left offset `(row, col)` of a probe footprint in object pixels.
pub type Position = (usize, usize);

#[derive(Clone, Debug, PartialEq)]
pub struct ScanGrid {
    pub positions: Vec<Position>,
    pub probe_width: usize,
    pub object_size: usize,
    pub nominal_overlap: f64,
    pub achieved_overlap: f64,
}

impl ScanGrid {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Number of footprints covering each object pixel, row-major.
    pub fn coverage(&self) -> Vec<u32> {
        let n = self.object_size;
        let w = self.probe_width;
        let mut cov = vec![0u32; n * n];
        for &(r0, c0) in &self.positions {
            for r in r0..r0 + w {
                for c in c0..c0 + w {
                    cov[r * n + c] += 1;
                }
            }
        }
        cov
    }

    pub fn check(&self) -> Result<()> {
        let (n, w) = (self.object_size, self.probe_width);
        for (i, &(r, c)) in self.positions.iter().enumerate() {
            if r + w > n || c + w > n {
                return Err(Error::Index(format!(
                    "position {i} at ({r}, {c}) puts a {w}-pixel patch outside a {n}-pixel object"
                )));
            }
        }
        Ok(())
    }
}

/// Converts a linear overlap fraction into an integer raster step.
///
/// Returns `(step, achieved)` with `step = round((1 - overlap)·w)` and
/// `achieved = 1 - step / w`.
pub fn overlap_to_step(overlap: f64, probe_width: usize) -> Result<(usize, f64)> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::Config(format!(
            "overlap must lie in [0, 1), got {overlap}"
        )));
    }
    if probe_width == 0 {
        return Err(Error::Config("probe width must be positive".into()));
    }
    let w = probe_width as f64;
    let step = (((1.0 - overlap) * w).round() as usize).max(1);
    if step >= probe_width && overlap > 0.0 {
        return Err(Error::Config(format!(
            "overlap {overlap} rounds to zero overlap for a {probe_width}-pixel probe"
        )));
    }
    Ok((step, 1.0 - step as f64 / w))
}

fn axis_offsets(n_side: usize, w: usize, step: usize) -> Vec<usize> {
    let mut v = Vec::new();
    let mut x = 0;
    while x + w <= n_side {
        v.push(x);
        x += step;
    }
    let last = n_side - w;
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

/// Square raster scan. The final row/column is clamped so the footprints end
/// exactly at the object border.
pub fn raster_grid(n_side: usize, probe_width: usize, step: usize) -> Result<ScanGrid> {
    if probe_width == 0 || n_side < probe_width {
        return Err(Error::Config(format!(
            "object side {n_side} must be at least the probe width {probe_width}"
        )));
    }
    if step == 0 {
        return Err(Error::Config("scan step must be at least 1".into()));
    }
    let offs = axis_offsets(n_side, probe_width, step);
    let positions = offs
        .iter()
        .flat_map(|&r| offs.iter().map(move |&c| (r, c)))
        .collect();
    let achieved = (1.0 - step as f64 / probe_width as f64).max(0.0);
    Ok(ScanGrid {
        positions,
        probe_width,
        object_size: n_side,
        nominal_overlap: achieved,
        achieved_overlap: achieved,
    })
}

/// Raster grid for a nominal overlap fraction.
pub fn grid_for_overlap(n_side: usize, probe_width: usize, overlap: f64) -> Result<ScanGrid> {
    let (step, achieved) = overlap_to_step(overlap, probe_width)?;
    let mut g = raster_grid(n_side, probe_width, step)?;
    g.nominal_overlap = overlap;
    g.achieved_overlap = achieved;
    Ok(g)
}

/// Shifts every coordinate that is not pinned to the object border by a
/// uniform integer in `[-max_shift, max_shift]`, then clamps into bounds.
pub fn jitter_grid(grid: &ScanGrid, max_shift: usize, rng: &mut Rng) -> ScanGrid {
    if max_shift == 0 {
        return grid.clone();
    }
    let last = grid.object_size - grid.probe_width;
    let m = max_shift as i64;
    let shift = |x: usize, rng: &mut Rng| -> usize {
        let d = rng.int_inclusive(-m, m);
        if x == 0 || x == last {
            x
        } else {
            (x as i64 + d).clamp(0, last as i64) as usize
        }
    };
    let positions = grid
        .positions
        .iter()
        .map(|&(r, c)| {
            let r2 = shift(r, rng);
            let c2 = shift(c, rng);
            (r2, c2)
        })
        .collect();
    ScanGrid {
        positions,
        ..grid.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_examples() {
        assert_eq!(overlap_to_step(0.75, 32).unwrap(), (8, 0.75));
        let (s, a) = overlap_to_step(0.20, 32).unwrap();
        assert_eq!(s, 26);
        assert!((a - 0.1875).abs() < 1e-15);
        assert_eq!(overlap_to_step(0.0, 16).unwrap(), (16, 0.0));
    }

    #[test]
    fn overlap_rounding_to_none_is_rejected() {
        assert!(matches!(overlap_to_step(0.01, 16), Err(Error::Config(_))));
        assert!(matches!(overlap_to_step(1.0, 16), Err(Error::Config(_))));
        assert!(matches!(overlap_to_step(-0.1, 16), Err(Error::Config(_))));
    }

    #[test]
    fn raster_counts() {
        let g = raster_grid(64, 16, 16).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.achieved_overlap, 0.0);
        let g = raster_grid(64, 16, 8).unwrap();
        assert_eq!(g.len(), 49);
    }

    #[test]
    fn raster_clamps_last_row_to_border() {
        let g = raster_grid(20, 8, 5).unwrap();
        // offsets 0, 5, 10, then 12 clamped to border
        let rows: Vec<_> = g.positions.iter().map(|p| p.0).collect();
        assert!(rows.contains(&12));
        assert!(g.coverage().iter().all(|&c| c >= 1));
        g.check().unwrap();
    }

    #[test]
    fn zero_jitter_is_identity() {
        let g = grid_for_overlap(64, 16, 0.25).unwrap();
        let mut rng = Rng::new(1, 0);
        assert_eq!(jitter_grid(&g, 0, &mut rng), g);
    }

    #[test]
    fn jitter_stays_in_bounds_and_covers() {
        let g = grid_for_overlap(64, 16, 0.25).unwrap();
        for seed in 0..20 {
            let mut rng = Rng::new(seed, 0);
            let j = jitter_grid(&g, 2, &mut rng);
            j.check().unwrap();
            assert!(j.coverage().iter().all(|&c| c >= 1));
            assert_eq!(j.len(), g.len());
        }
    }
}
