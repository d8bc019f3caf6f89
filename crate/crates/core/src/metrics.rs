//! Reconstruction quality metrics: phase-aligned NRMSE and magnitude SSIM.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::ComplexField;

/// Phase-aligned normalized RMS error.
///
/// Returns `(‖c·f̂ − f‖ / ‖f‖, arg c)` where `c = ⟨f̂, f⟩ / |⟨f̂, f⟩|` and
/// `⟨f̂, f⟩ = Σ conj(f̂)·f`. The returned phase is the rotation applied to the
/// estimate, so `f̂ = e^{iθ} f` yields `−θ`. Only the global phase is
/// removed; amplitude scaling is not compensated.
pub fn nrmse_phase_aligned(estimate: &ComplexField, reference: &ComplexField) -> Result<(f64, f64)> {
    if estimate.shape() != reference.shape() {
        return Err(Error::Dimension(format!(
            "metric inputs differ in shape: {:?} vs {:?}",
            estimate.shape(),
            reference.shape()
        )));
    }
    let ref_norm = reference.norm();
    if ref_norm == 0.0 {
        return Err(Error::UndefinedReference("reference field has zero norm".into()));
    }
    let inner = estimate.inner(reference);
    let c = if inner.norm() == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        inner / inner.norm()
    };
    let err: f64 = estimate
        .data()
        .iter()
        .zip(reference.data())
        .map(|(e, r)| (c * e - r).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok((err / ref_norm, c.arg()))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut t: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = t.iter().sum();
    for v in &mut t {
        *v /= s;
    }
    t
}

/// Valid-mode separable filtering of a `h×w` image.
fn filter_valid(img: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..k).map(|j| taps[j] * img[r * w + c + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|i| taps[i] * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Dynamic range used by [`ssim_magnitude`]: `max − min` of the reference
/// magnitude, or 1 when the reference is constant.
pub fn ssim_dynamic_range(reference: &[f64]) -> f64 {
    let hi = reference.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = reference.iter().copied().fold(f64::INFINITY, f64::min);
    let range = hi - lo;
    if range > 0.0 {
        range
    } else {
        1.0
    }
}

/// SSIM of two real images with an 11×11 Gaussian window (σ = 1.5), averaged
/// over all window positions fully inside the image.
pub fn ssim_real(a: &[f64], b: &[f64], h: usize, w: usize, dynamic_range: f64) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return Err(Error::Dimension("SSIM inputs must match the stated shape".into()));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {h}x{w}"
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * dynamic_range).powi(2);
    let c2 = (SSIM_K2 * dynamic_range).powi(2);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, h, w, &taps);
    let mu_b = filter_valid(b, h, w, &taps);
    let e_aa = filter_valid(&aa, h, w, &taps);
    let e_bb = filter_valid(&bb, h, w, &taps);
    let e_ab = filter_valid(&ab, h, w, &taps);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / n as f64)
}

/// SSIM between the magnitude images `|f̂|` and `|f|`.
pub fn ssim_magnitude(estimate: &ComplexField, reference: &ComplexField) -> Result<f64> {
    if estimate.shape() != reference.shape() {
        return Err(Error::Dimension(format!(
            "metric inputs differ in shape: {:?} vs {:?}",
            estimate.shape(),
            reference.shape()
        )));
    }
    let a = estimate.amplitude();
    let b = reference.amplitude();
    let (h, w) = reference.shape();
    ssim_real(&a, &b, h, w, ssim_dynamic_range(&b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageMetrics {
    pub nrmse: f64,
    pub ssim: f64,
    pub phase: f64,
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub per_image: Vec<ImageMetrics>,
    pub nrmse: Summary,
    pub ssim: Summary,
}

pub fn image_metrics(estimate: &ComplexField, reference: &ComplexField) -> Result<ImageMetrics> {
    let (nrmse, phase) = nrmse_phase_aligned(estimate, reference)?;
    let ssim = ssim_magnitude(estimate, reference)?;
    Ok(ImageMetrics { nrmse, ssim, phase })
}

pub fn evaluate_set(reconstructions: &[ComplexField], references: &[ComplexField]) -> Result<MetricReport> {
    if reconstructions.is_empty() {
        return Err(Error::Config("cannot evaluate an empty set".into()));
    }
    if reconstructions.len() != references.len() {
        return Err(Error::Dimension(format!(
            "{} reconstructions for {} references",
            reconstructions.len(),
            references.len()
        )));
    }
    let per_image = reconstructions
        .iter()
        .zip(references)
        .map(|(e, r)| image_metrics(e, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(report_from(per_image))
}

pub fn report_from(per_image: Vec<ImageMetrics>) -> MetricReport {
    let n: Vec<f64> = per_image.iter().map(|m| m.nrmse).collect();
    let s: Vec<f64> = per_image.iter().map(|m| m.ssim).collect();
    MetricReport {
        nrmse: Summary::of(&n),
        ssim: Summary::of(&s),
        per_image,
    }
}
