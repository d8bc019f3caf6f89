//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use std::f64::consts::PI;

use num_complex::Complex64;
use ptycho_core::{ComplexField, Rng};

pub fn random_field(h: usize, w: usize, rng: &mut Rng) -> ComplexField {
    ComplexField::from_fn(h, w, |_, _| Complex64::new(rng.normal(), rng.normal()))
}

/// Unitary DFT by direct summation.
pub fn naive_dft(x: &ComplexField) -> ComplexField {
    let (h, w) = x.shape();
    let scale = 1.0 / ((h * w) as f64).sqrt();
    ComplexField::from_fn(h, w, |u, v| {
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..h {
            for c in 0..w {
                let angle = -2.0 * PI * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                acc += x[(r, c)] * Complex64::from_polar(1.0, angle);
            }
        }
        acc * scale
    })
}

pub fn max_diff(a: &ComplexField, b: &ComplexField) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Windowed SSIM computed window by window from an explicit 2-D Gaussian
/// kernel (11×11, σ = 1.5), averaging over windows fully inside the image.
pub fn reference_ssim(a: &[f64], b: &[f64], h: usize, w: usize, range: f64) -> f64 {
    let k = 11;
    let half = 5.0;
    let mut kernel = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let d2 = (i as f64 - half).powi(2) + (j as f64 - half).powi(2);
            kernel[i * k + j] = (-d2 / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|v| *v /= total);
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let mut acc = 0.0;
    let mut count = 0;
    for r0 in 0..=h - k {
        for c0 in 0..=w - k {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let q = (r0 + i) * w + c0 + j;
                    ma += kernel[i * k + j] * a[q];
                    mb += kernel[i * k + j] * b[q];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let q = (r0 + i) * w + c0 + j;
                    let g = kernel[i * k + j];
                    va += g * (a[q] - ma).powi(2);
                    vb += g * (b[q] - mb).powi(2);
                    cov += g * (a[q] - ma) * (b[q] - mb);
                }
            }
            acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}
