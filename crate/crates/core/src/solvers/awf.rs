//! Accelerated Wirtinger flow on the amplitude loss
//! `L(f) = Σᵢ ‖ |A_i f| − yᵢ ‖²`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::Result;
use crate::field::ComplexField;
use crate::model::{adjoint_add, apply, MeasurementSet, Probe};

/// Loss value and gradient `∇L = ∂L/∂Re f + i ∂L/∂Im f`
/// `= 2 Σᵢ A_iᴴ(A_i f − yᵢ ⊙ phase(A_i f))`.
///
/// Per-position terms are computed independently and summed in position
/// order.
pub fn loss_and_grad(f: &ComplexField, probe: &Probe, meas: &MeasurementSet) -> Result<(f64, ComplexField)> {
    let w = probe.width();
    let terms: Vec<(f64, ComplexField)> = meas
        .grid
        .positions
        .par_iter()
        .zip(&meas.patterns)
        .map(|(&pos, y)| {
            let z = apply(f, probe, pos)?;
            let mut loss = 0.0;
            let mut r = ComplexField::zeros(w, w);
            for ((zk, &yk), rk) in z.data().iter().zip(y).zip(r.data_mut()) {
                let m = zk.norm();
                loss += (m - yk).powi(2);
                *rk = if m > 0.0 { zk * (1.0 - yk / m) } else { *zk };
            }
            Ok((loss, r))
        })
        .collect::<Result<_>>()?;
    let mut grad = ComplexField::zeros(f.height(), f.width());
    let mut loss = 0.0;
    for ((l, r), &pos) in terms.iter().zip(&meas.grid.positions) {
        loss += l;
        adjoint_add(&mut grad, r, probe, pos)?;
    }
    for g in grad.data_mut() {
        *g *= 2.0;
    }
    Ok((loss, grad))
}

pub fn loss(f: &ComplexField, probe: &Probe, meas: &MeasurementSet) -> Result<f64> {
    let terms: Vec<f64> = meas
        .grid
        .positions
        .par_iter()
        .zip(&meas.patterns)
        .map(|(&pos, y)| {
            let z = apply(f, probe, pos)?;
            Ok(z.data().iter().zip(y).map(|(z, y)| (z.norm() - y).powi(2)).sum())
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

pub(crate) fn axpy(x: &ComplexField, a: f64, y: &ComplexField) -> ComplexField {
    let data = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(x, y)| x + y * a)
        .collect();
    ComplexField::from_vec(x.height(), x.width(), data).expect("same shape")
}

/// Momentum extrapolation `f + μ (f − f_prev)`.
pub(crate) fn extrapolate(f: &ComplexField, prev: &ComplexField, mu: f64) -> ComplexField {
    let data = f
        .data()
        .iter()
        .zip(prev.data())
        .map(|(a, b)| a + (a - b) * mu)
        .collect::<Vec<Complex64>>();
    ComplexField::from_vec(f.height(), f.width(), data).expect("same shape")
}
