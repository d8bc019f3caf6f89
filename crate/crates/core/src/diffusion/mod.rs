//! Discrete variance-preserving diffusion: schedules, forward noising,
//! ancestral denoising and Tweedie estimates.

mod mixture;
mod schedule;

pub use mixture::GaussianMixtureScore;
pub use schedule::{make_schedule, NoiseSchedule};

use crate::denoiser::TinyUNet;
use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Shape of a diffusion state, `[channels, height, width]`, stored flat.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl StateShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    /// A plain vector of `n` values.
    pub fn flat(n: usize) -> Self {
        Self::new(1, 1, n)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Noise predictor `ε̂(x_t, t)`.
pub trait ScoreModel: Sync {
    fn predict_eps(&self, x: &[f64], shape: StateShape, t: usize) -> Result<Vec<f64>>;

    /// `ε̂` together with `(∂ε̂/∂x)ᵀ·v`, where `v` is computed from `ε̂`.
    fn predict_eps_vjp(
        &self,
        x: &[f64],
        shape: StateShape,
        t: usize,
        v: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<(Vec<f64>, Vec<f64>)>;
}

impl<T: Real> ScoreModel for TinyUNet<T> {
    fn predict_eps(&self, x: &[f64], shape: StateShape, t: usize) -> Result<Vec<f64>> {
        check_channels(self.config().in_channels, shape)?;
        self.predict(x, shape.height, shape.width, t)
    }

    fn predict_eps_vjp(
        &self,
        x: &[f64],
        shape: StateShape,
        t: usize,
        v: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        check_channels(self.config().in_channels, shape)?;
        let mut err = None;
        let out = self.predict_with_vjp(x, shape.height, shape.width, t, |eps| match v(eps) {
            Ok(s) => s,
            Err(e) => {
                err = Some(e);
                vec![0.0; eps.len()]
            }
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}

fn check_channels(expected: usize, shape: StateShape) -> Result<()> {
    if shape.channels != expected {
        return Err(Error::Dimension(format!(
            "model expects {expected} channels, state has {}",
            shape.channels
        )));
    }
    Ok(())
}

/// A model that always predicts zero noise.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroScore;

impl ScoreModel for ZeroScore {
    fn predict_eps(&self, x: &[f64], _shape: StateShape, _t: usize) -> Result<Vec<f64>> {
        Ok(vec![0.0; x.len()])
    }

    fn predict_eps_vjp(
        &self,
        x: &[f64],
        _shape: StateShape,
        _t: usize,
        v: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let eps = vec![0.0; x.len()];
        v(&eps)?;
        Ok((eps, vec![0.0; x.len()]))
    }
}

/// Jumps from `x_t` to `x_{t+j}` in one draw:
/// `√(ᾱ_{t+j}/ᾱ_t)·x_t + √(1 − ᾱ_{t+j}/ᾱ_t)·z`.
pub fn noising_step(x: &[f64], t: usize, j: usize, schedule: &NoiseSchedule, rng: &mut Rng) -> Result<Vec<f64>> {
    if t + j > schedule.steps().saturating_sub(1) && j > 0 {
        return Err(Error::Config(format!(
            "noising jump {t} → {} exceeds the last step {}",
            t + j,
            schedule.steps() - 1
        )));
    }
    if j == 0 {
        return Ok(x.to_vec());
    }
    let ratio = schedule.alpha_bar(t + j) / schedule.alpha_bar(t);
    let (a, b) = (ratio.sqrt(), (1.0 - ratio).sqrt());
    Ok(x.iter().map(|&v| a * v + b * rng.normal()).collect())
}

/// One ancestral step `x_t → x_{t−1}` given the noise prediction.
/// No noise is drawn at `t = 1`.
pub fn denoise_with(x: &[f64], eps: &[f64], t: usize, schedule: &NoiseSchedule, rng: &mut Rng) -> Vec<f64> {
    let beta = schedule.beta(t);
    let coef = beta / (1.0 - schedule.alpha_bar(t)).sqrt();
    let inv = 1.0 / (1.0 - beta).sqrt();
    let sigma = schedule.sigma_tilde(t);
    x.iter()
        .zip(eps)
        .map(|(&xv, &e)| {
            let mean = inv * (xv - coef * e);
            if t > 1 {
                mean + sigma * rng.normal()
            } else {
                mean
            }
        })
        .collect()
}

pub fn denoising_step(
    x: &[f64],
    shape: StateShape,
    t: usize,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    check_step(t, schedule)?;
    let eps = model.predict_eps(x, shape, t)?;
    Ok(denoise_with(x, &eps, t, schedule, rng))
}

/// `x̂₀ = (x_t − √(1−ᾱ_t)·ε̂)/√ᾱ_t`.
pub fn tweedie_from_eps(x: &[f64], eps: &[f64], t: usize, schedule: &NoiseSchedule) -> Vec<f64> {
    let ab = schedule.alpha_bar(t);
    let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
    x.iter().zip(eps).map(|(&xv, &e)| (xv - n * e) / s).collect()
}

pub fn tweedie_x0(
    x: &[f64],
    shape: StateShape,
    t: usize,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_step(t, schedule)?;
    let eps = model.predict_eps(x, shape, t)?;
    Ok(tweedie_from_eps(x, &eps, t, schedule))
}

fn check_step(t: usize, schedule: &NoiseSchedule) -> Result<()> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::Config(format!("step {t} outside 1..={}", schedule.steps())));
    }
    Ok(())
}

/// Unguided ancestral sampling from `x_N ~ N(0, I)` down to `x_0`.
pub fn sample(model: &dyn ScoreModel, shape: StateShape, schedule: &NoiseSchedule, rng: &mut Rng) -> Result<Vec<f64>> {
    let mut x = rng.normals(shape.len());
    for t in (1..=schedule.steps()).rev() {
        x = denoising_step(&x, shape, t, model, schedule, rng)?;
    }
    Ok(x)
}
