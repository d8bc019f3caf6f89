//! Unitary 2-D discrete Fourier transform.
//!
//! Both directions carry a `1/√(HW)` factor, so `ifft2` is the adjoint of
//! `fft2` and norms are preserved. Only power-of-two sizes are accepted.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::field::ComplexField;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    let forward = direction == FftDirection::Forward;
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        let (planner, cache) = &mut *p;
        cache
            .entry((len, forward))
            .or_insert_with(|| planner.plan_fft(len, direction))
            .clone()
    })
}

fn check_dims(x: &ComplexField) -> Result<()> {
    let (h, w) = x.shape();
    if h == 0 || w == 0 || !h.is_power_of_two() || !w.is_power_of_two() {
        return Err(Error::Dimension(format!(
            "FFT needs power-of-two dimensions, got {h}x{w}"
        )));
    }
    Ok(())
}

fn transform_inplace(x: &mut ComplexField, direction: FftDirection) {
    let (h, w) = x.shape();
    let row = plan(w, direction);
    let col = plan(h, direction);
    let data = x.data_mut();
    row.process(data);

    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            column[r] = data[r * w + c];
        }
        col.process(&mut column);
        for r in 0..h {
            data[r * w + c] = column[r];
        }
    }
    let s = 1.0 / ((h * w) as f64).sqrt();
    for z in data.iter_mut() {
        *z *= s;
    }
}

/// Forward unitary transform, in place.
pub fn fft2_inplace(x: &mut ComplexField) -> Result<()> {
    check_dims(x)?;
    transform_inplace(x, FftDirection::Forward);
    Ok(())
}

/// Inverse unitary transform, in place.
pub fn ifft2_inplace(x: &mut ComplexField) -> Result<()> {
    check_dims(x)?;
    transform_inplace(x, FftDirection::Inverse);
    Ok(())
}

pub fn fft2(x: &ComplexField) -> Result<ComplexField> {
    let mut y = x.clone();
    fft2_inplace(&mut y)?;
    Ok(y)
}

pub fn ifft2(x: &ComplexField) -> Result<ComplexField> {
    let mut y = x.clone();
    ifft2_inplace(&mut y)?;
    Ok(y)
}
