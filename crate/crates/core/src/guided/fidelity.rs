//! Data-fidelity terms evaluated on the Tweedie estimate.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{from_two_channel, two_channel_pullback, ComplexField, TwoChannelImage};
use crate::model::{adjoint_add, apply, MeasurementSet, Probe};

/// A scalar data-consistency penalty on a flat state and its gradient.
pub trait DataFidelity: Sync {
    fn value(&self, x0: &[f64]) -> Result<f64>;

    /// Value and a (sub)gradient w.r.t. the flat state.
    fn value_and_grad(&self, x0: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Rescales a state-space gradient evaluated near `x0` into a better
    /// conditioned descent direction. Identity by default.
    fn precondition(&self, _x0: &[f64], _grad: &mut [f64]) {}
}

/// Smallest decoded amplitude used when rescaling phase-channel gradients.
pub const PRECONDITION_AMPLITUDE_FLOOR: f64 = 0.05;

/// Inverse of the metric the two-channel decoding induces on complex values:
/// amplitude-channel entries scale by 4 and phase-channel entries by
/// `1/(π r)²`, so a step acts like the same step taken on the complex object.
pub fn two_channel_metric_precondition(x0: &[f64], grad: &mut [f64]) {
    let half = x0.len() / 2;
    let (ga, gp) = grad.split_at_mut(half);
    for g in ga.iter_mut() {
        *g *= 4.0;
    }
    for (g, a) in gp.iter_mut().zip(&x0[..half]) {
        let r = (0.5 * (a + 1.0)).max(PRECONDITION_AMPLITUDE_FLOOR);
        *g /= (std::f64::consts::PI * r).powi(2);
    }
}

/// `Σᵢ Σ_pixels |yᵢ − |F(P ⊙ Dᵢ f)||` with `f` decoded from the two
/// normalized channels.
pub struct L1Magnitude<'a> {
    pub meas: &'a MeasurementSet,
    pub probe: &'a Probe,
    /// Per-pixel `I_max / ((1 − a)·I + a·I_max)` for the summed probe
    /// intensity `I`, used by the preconditioner.
    illumination_weight: Vec<f64>,
}

/// Share of the peak illumination added to every pixel when weighting by
/// inverse illumination.
pub const ILLUMINATION_REGULARIZER: f64 = 0.1;

fn sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl<'a> L1Magnitude<'a> {
    pub fn new(meas: &'a MeasurementSet, probe: &'a Probe) -> Result<Self> {
        if probe.width() != meas.probe_width() {
            return Err(Error::Dimension(format!(
                "probe width {} does not match measurement width {}",
                probe.width(),
                meas.probe_width()
            )));
        }
        let n = meas.object_size();
        let w = probe.width();
        let mut intensity = vec![0.0; n * n];
        for &(r0, c0) in &meas.grid.positions {
            for r in 0..w {
                for c in 0..w {
                    intensity[(r0 + r) * n + c0 + c] += probe.field()[(r, c)].norm_sqr();
                }
            }
        }
        let peak = intensity.iter().cloned().fold(0.0, f64::max);
        let a = ILLUMINATION_REGULARIZER;
        let illumination_weight = intensity
            .iter()
            .map(|&i| if peak > 0.0 { peak / ((1.0 - a) * i + a * peak) } else { 1.0 })
            .collect();
        Ok(Self { meas, probe, illumination_weight })
    }

    fn decode(&self, x0: &[f64]) -> Result<TwoChannelImage> {
        let n = self.meas.object_size();
        TwoChannelImage::from_flat(n, n, x0)
    }

    /// Value on a complex object.
    pub fn value_complex(&self, f: &ComplexField) -> Result<f64> {
        let terms: Vec<f64> = self
            .meas
            .grid
            .positions
            .par_iter()
            .zip(&self.meas.patterns)
            .map(|(&pos, y)| {
                let z = apply(f, self.probe, pos)?;
                Ok(z.data().iter().zip(y).map(|(z, y)| (y - z.norm()).abs()).sum())
            })
            .collect::<Result<_>>()?;
        Ok(terms.iter().sum())
    }

    /// Value and gradient `Σᵢ A_iᴴ(−sign(yᵢ − |zᵢ|) ⊙ zᵢ/|zᵢ|)` on a complex
    /// object; per-position terms are summed in position order.
    pub fn value_and_grad_complex(&self, f: &ComplexField) -> Result<(f64, ComplexField)> {
        let w = self.probe.width();
        let terms: Vec<(f64, ComplexField)> = self
            .meas
            .grid
            .positions
            .par_iter()
            .zip(&self.meas.patterns)
            .map(|(&pos, y)| {
                let z = apply(f, self.probe, pos)?;
                let mut value = 0.0;
                let mut r = ComplexField::zeros(w, w);
                for ((zk, &yk), rk) in z.data().iter().zip(y).zip(r.data_mut()) {
                    let m = zk.norm();
                    let res = yk - m;
                    value += res.abs();
                    *rk = if m > 0.0 { zk * (-sign(res) / m) } else { Complex64::new(0.0, 0.0) };
                }
                Ok((value, r))
            })
            .collect::<Result<_>>()?;
        let mut grad = ComplexField::zeros(f.height(), f.width());
        let mut value = 0.0;
        for ((v, r), &pos) in terms.iter().zip(&self.meas.grid.positions) {
            value += v;
            adjoint_add(&mut grad, r, self.probe, pos)?;
        }
        Ok((value, grad))
    }
}

impl DataFidelity for L1Magnitude<'_> {
    fn value(&self, x0: &[f64]) -> Result<f64> {
        let t = self.decode(x0)?;
        self.value_complex(&from_two_channel(&t))
    }

    fn value_and_grad(&self, x0: &[f64]) -> Result<(f64, Vec<f64>)> {
        let t = self.decode(x0)?;
        let (v, g) = self.value_and_grad_complex(&from_two_channel(&t))?;
        Ok((v, two_channel_pullback(&t, &g).to_flat()))
    }

    fn precondition(&self, x0: &[f64], grad: &mut [f64]) {
        two_channel_metric_precondition(x0, grad);
        let half = grad.len() / 2;
        let (ga, gp) = grad.split_at_mut(half);
        for ((a, p), w) in ga.iter_mut().zip(gp.iter_mut()).zip(&self.illumination_weight) {
            *a *= w;
            *p *= w;
        }
    }
}

/// `l1_fidelity_value` on a two-channel estimate.
pub fn l1_fidelity_value(x0: &TwoChannelImage, meas: &MeasurementSet, probe: &Probe) -> Result<f64> {
    L1Magnitude::new(meas, probe)?.value_complex(&from_two_channel(x0))
}

/// Gradient of [`l1_fidelity_value`] w.r.t. both normalized channels.
pub fn l1_fidelity_grad_x0(x0: &TwoChannelImage, meas: &MeasurementSet, probe: &Probe) -> Result<TwoChannelImage> {
    let (_, g) = L1Magnitude::new(meas, probe)?.value_and_grad_complex(&from_two_channel(x0))?;
    Ok(two_channel_pullback(x0, &g))
}

/// `‖y − x‖²` for an identity forward operator.
pub struct L2Linear {
    pub y: Vec<f64>,
}

impl DataFidelity for L2Linear {
    fn value(&self, x0: &[f64]) -> Result<f64> {
        if x0.len() != self.y.len() {
            return Err(Error::Dimension(format!("state of {} for {} observations", x0.len(), self.y.len())));
        }
        Ok(x0.iter().zip(&self.y).map(|(x, y)| (y - x).powi(2)).sum())
    }

    fn value_and_grad(&self, x0: &[f64]) -> Result<(f64, Vec<f64>)> {
        let v = self.value(x0)?;
        Ok((v, x0.iter().zip(&self.y).map(|(x, y)| 2.0 * (x - y)).collect()))
    }
}
