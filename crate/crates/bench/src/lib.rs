//! Benchmark fixtures shared by the criterion targets.

use num_complex::Complex64;
use ptycho_core::model::{grid_for_overlap, make_probe, Probe, ScanGrid};
use ptycho_core::{ComplexField, Rng};

pub fn random_field(n: usize, seed: u64) -> ComplexField {
    let mut rng = Rng::new(seed, 0);
    ComplexField::from_fn(n, n, |_, _| Complex64::new(rng.normal(), rng.normal()))
}

/// Default desk instance: 64×64 object, 16×16 probe.
pub fn desk_scan(overlap: f64) -> (ComplexField, Probe, ScanGrid) {
    let probe = make_probe(16, 0.35, 0.2).expect("valid probe");
    let grid = grid_for_overlap(64, 16, overlap).expect("valid grid");
    (random_field(64, 1), probe, grid)
}
