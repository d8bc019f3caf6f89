//! The far-field measurement model: patch extraction `Dᵢ`, probe modulation,
//! unitary Fourier transform and Poisson photon noise.

use rayon::prelude::*;

use super::probe::Probe;
use super::scan::{Position, ScanGrid};
use crate::error::{Error, Result};
use crate::fft;
use crate::field::ComplexField;
use crate::rng::Rng;

/// `Dᵢ f`: copies the `w×w` block at `pos`.
pub fn extract_patch(f: &ComplexField, pos: Position, w: usize) -> Result<ComplexField> {
    let (r0, c0) = pos;
    if r0 + w > f.height() || c0 + w > f.width() {
        return Err(Error::Index(format!(
            "{w}x{w} patch at ({r0}, {c0}) exceeds {}x{} field",
            f.height(),
            f.width()
        )));
    }
    Ok(ComplexField::from_fn(w, w, |r, c| f[(r0 + r, c0 + c)]))
}

/// `target += Dᵢᵀ g`.
pub fn embed_patch_add(target: &mut ComplexField, g: &ComplexField, pos: Position) -> Result<()> {
    let (r0, c0) = pos;
    let (h, w) = g.shape();
    if r0 + h > target.height() || c0 + w > target.width() {
        return Err(Error::Index(format!(
            "{h}x{w} patch at ({r0}, {c0}) exceeds {}x{} field",
            target.height(),
            target.width()
        )));
    }
    for r in 0..h {
        for c in 0..w {
            target[(r0 + r, c0 + c)] += g[(r, c)];
        }
    }
    Ok(())
}

/// Exit wave `P ⊙ Dᵢ f`.
pub fn exit_wave(f: &ComplexField, probe: &Probe, pos: Position) -> Result<ComplexField> {
    Ok(extract_patch(f, pos, probe.width())?.hadamard(probe.field()))
}

/// `A_i f = F(P ⊙ Dᵢ f)`.
pub fn apply(f: &ComplexField, probe: &Probe, pos: Position) -> Result<ComplexField> {
    let mut psi = exit_wave(f, probe, pos)?;
    fft::fft2_inplace(&mut psi)?;
    Ok(psi)
}

/// `target += A_iᴴ g = Dᵢᵀ(conj(P) ⊙ F⁻¹ g)`.
pub fn adjoint_add(target: &mut ComplexField, g: &ComplexField, probe: &Probe, pos: Position) -> Result<()> {
    let mut back = fft::ifft2(g)?;
    for (b, p) in back.data_mut().iter_mut().zip(probe.field().data()) {
        *b *= p.conj();
    }
    embed_patch_add(target, &back, pos)
}

/// Noiseless far-field amplitudes `|F P Dᵢ f|` for every scan position.
pub fn forward_amplitudes(f: &ComplexField, probe: &Probe, grid: &ScanGrid) -> Result<Vec<Vec<f64>>> {
    if probe.width() != grid.probe_width {
        return Err(Error::Dimension(format!(
            "probe width {} does not match grid probe width {}",
            probe.width(),
            grid.probe_width
        )));
    }
    grid.positions
        .par_iter()
        .map(|&pos| Ok(apply(f, probe, pos)?.amplitude()))
        .collect()
}

/// Scan positions plus the measured amplitude patterns `yᵢ`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    pub grid: ScanGrid,
    pub patterns: Vec<Vec<f64>>,
    pub photon_max: f64,
    pub seed: u64,
    pub noiseless: bool,
}

impl MeasurementSet {
    pub fn probe_width(&self) -> usize {
        self.grid.probe_width
    }

    pub fn object_size(&self) -> usize {
        self.grid.object_size
    }

    /// Σᵢ Σ_pixels |yᵢ|.
    pub fn l1_norm(&self) -> f64 {
        self.patterns.iter().flatten().map(|v| v.abs()).sum()
    }
}

/// Applies global pseudo-Poisson noise: the brightest pixel over all
/// positions receives `photon_max` expected counts.
///
/// Position `i` draws from stream `i` of `seed`.
pub fn measure(
    amplitudes: &[Vec<f64>],
    grid: &ScanGrid,
    photon_max: f64,
    seed: u64,
    noiseless: bool,
) -> Result<MeasurementSet> {
    if !(photon_max > 0.0) {
        return Err(Error::Config(format!("photon maximum must be positive, got {photon_max}")));
    }
    if amplitudes.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "{} amplitude maps for {} scan positions",
            amplitudes.len(),
            grid.len()
        )));
    }
    let patterns = if noiseless {
        amplitudes.to_vec()
    } else {
        let peak = amplitudes
            .iter()
            .flatten()
            .map(|a| a * a)
            .fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::DegenerateScale);
        }
        let scale = photon_max / peak;
        amplitudes
            .par_iter()
            .enumerate()
            .map(|(i, amp)| {
                let mut rng = Rng::new(seed, i as u64);
                amp.iter()
                    .map(|a| (rng.poisson(scale * a * a) / scale).sqrt())
                    .collect()
            })
            .collect()
    };
    Ok(MeasurementSet {
        grid: grid.clone(),
        patterns,
        photon_max,
        seed,
        noiseless,
    })
}

/// Amplitude data-fidelity Σᵢ ‖ |A_i f| − yᵢ ‖².
pub fn amplitude_residual_sq(f: &ComplexField, probe: &Probe, meas: &MeasurementSet) -> Result<f64> {
    let mut total = 0.0;
    for (pos, y) in meas.grid.positions.iter().zip(&meas.patterns) {
        let psi = apply(f, probe, *pos)?;
        total += psi
            .data()
            .iter()
            .zip(y)
            .map(|(z, y)| (z.norm() - y).powi(2))
            .sum::<f64>();
    }
    Ok(total)
}
