//! Regularized ptychographic iterative engine.

use crate::error::{Error, Result};
use crate::fft;
use crate::field::ComplexField;
use crate::model::{embed_patch_add, extract_patch, MeasurementSet, Probe};

/// One sequential rPIE sweep over the scan positions in `order`.
///
/// For each position the exit wave is Fourier-transformed, its modulus is
/// replaced by the measured amplitude (zero-modulus pixels are left as they
/// are), and the object patch receives
/// `conj(P)·(ψ′ − ψ) / ((1 − α)|P|² + α·max|P|²)`.
pub fn rpie_step(
    f: &mut ComplexField,
    probe: &Probe,
    meas: &MeasurementSet,
    alpha: f64,
    order: &[usize],
) -> Result<()> {
    let pmax2 = probe.max_abs_sqr();
    if pmax2 <= 0.0 {
        return Err(Error::InvalidProbe("max |P| is zero".into()));
    }
    let w = probe.width();
    let p = probe.field().data();
    let denom: Vec<f64> = p
        .iter()
        .map(|z| (1.0 - alpha) * z.norm_sqr() + alpha * pmax2)
        .collect();
    for &i in order {
        let pos = meas.grid.positions[i];
        let y = &meas.patterns[i];
        let patch = extract_patch(f, pos, w)?;
        let psi = patch.hadamard(probe.field());
        let mut spec = fft::fft2(&psi)?;
        for (z, &amp) in spec.data_mut().iter_mut().zip(y) {
            let m = z.norm();
            if m > 0.0 {
                *z *= amp / m;
            }
        }
        fft::ifft2_inplace(&mut spec)?;
        let mut update = ComplexField::zeros(w, w);
        for k in 0..w * w {
            let d = spec.data()[k] - psi.data()[k];
            update.data_mut()[k] = p[k].conj() * d / denom[k];
        }
        embed_patch_add(f, &update, pos)?;
    }
    Ok(())
}
