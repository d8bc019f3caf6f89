//! Diffusion posterior sampling with data-fidelity guidance and time-travel
//! resampling.
//!
//! The chain runs over states `x_N, …, x_0` with the schedule indexed
//! `1..=N`. After each outer step produces `x_s` (`s = t − 1`), time travel
//! is eligible when `s + j ≤ N − 1` and the outer step index is a multiple of
//! the travel stride: the state is re-noised to `x_{s+j}` in one jump and
//! brought back to `x_s` by `j` guided denoising steps.

mod fidelity;

pub use fidelity::{
    l1_fidelity_grad_x0, l1_fidelity_value, two_channel_metric_precondition, DataFidelity, L1Magnitude, L2Linear,
    PRECONDITION_AMPLITUDE_FLOOR,
};

use std::fmt::Write as _;
use std::str::FromStr;

use crate::diffusion::{denoise_with, noising_step, tweedie_from_eps, NoiseSchedule, ScoreModel, StateShape};
use crate::error::{Error, Result};
use crate::field::{from_two_channel, ComplexField, TwoChannelImage};
use crate::model::{MeasurementSet, Probe};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientMode {
    /// Back-propagate through the Tweedie estimate and the network.
    Full,
    /// Treat `∂x̂₀/∂x_t` as `I/√ᾱ_t`.
    Surrogate,
}

impl FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "surrogate" => Ok(Self::Surrogate),
            other => Err(Error::Config(format!("unknown gradient mode `{other}` (valid: full, surrogate)"))),
        }
    }
}

/// How the guidance step size `ζ_t` is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    /// `ζ_t = ζ₀ / (fidelity + 1e−8)`.
    ResidualNormalized,
    /// `ζ_t = ζ₀` at every step.
    Constant,
    /// `ζ_t = ζ₀ · β_t / (2(σ² + r_t²)√(1 − β_t))`: the reverse-step weight
    /// of a Gaussian likelihood on a squared-error fidelity. `σ²` is the
    /// measurement noise variance and `r_t² = v(1 − ᾱ_t)/(ᾱ_t v + 1 − ᾱ_t)`
    /// the spread of `x₀` given `x_t` under a prior of per-coordinate
    /// variance `v = prior_var`; zero ignores that spread.
    GaussianLikelihood { noise_var: f64, prior_var: f64 },
    /// `ζ_t = ζ₀ · fidelity / ⟨g, M g⟩` with `g` the gradient and `M` the
    /// preconditioner: the linearized step that would remove a fraction
    /// `ζ₀` of the fidelity.
    Polyak,
}

impl FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polyak" => Ok(Self::Polyak),
            "residual" => Ok(Self::ResidualNormalized),
            "constant" => Ok(Self::Constant),
            other => Err(Error::Config(format!(
                "unknown step rule `{other}` (valid: polyak, residual, constant)"
            ))),
        }
    }
}

impl StepRule {
    /// Name accepted by [`FromStr`]; the likelihood rule has none.
    pub fn name(self) -> Option<&'static str> {
        match self {
            Self::Polyak => Some("polyak"),
            Self::ResidualNormalized => Some("residual"),
            Self::Constant => Some("constant"),
            Self::GaussianLikelihood { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceConfig {
    pub zeta0: f64,
    pub travel_depth: usize,
    pub travel_stride: usize,
    pub mode: GradientMode,
    pub step_rule: StepRule,
    /// Rescale the guidance gradient with the fidelity's preconditioner.
    pub precondition: bool,
    pub seed: u64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            zeta0: 1.5,
            travel_depth: 10,
            travel_stride: 1,
            mode: GradientMode::Surrogate,
            step_rule: StepRule::Polyak,
            precondition: true,
            seed: 0,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta0 > 0.0 && self.zeta0.is_finite()) {
            return Err(Error::Config(format!("zeta0 must be positive, got {}", self.zeta0)));
        }
        if self.travel_stride == 0 {
            return Err(Error::Config("travel stride must be at least 1".into()));
        }
        if let StepRule::GaussianLikelihood { noise_var, prior_var } = self.step_rule {
            if !(noise_var > 0.0) {
                return Err(Error::Config("likelihood noise variance must be positive".into()));
            }
            if !(prior_var >= 0.0) {
                return Err(Error::Config("prior variance must be non-negative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    /// Schedule index of the state the step started from.
    pub t: usize,
    /// Whether the step belongs to a time-travel segment.
    pub travel: bool,
    pub fidelity: f64,
    pub zeta: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepCounts {
    pub outer: usize,
    pub travels: usize,
    pub inner: usize,
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub state: Vec<f64>,
    pub trace: Vec<TraceEntry>,
    pub counts: StepCounts,
}

impl Reconstruction {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("index,t,travel,fidelity,zeta\n");
        for (i, e) in self.trace.iter().enumerate() {
            let _ = writeln!(s, "{i},{},{},{:e},{:e}", e.t, u8::from(e.travel), e.fidelity, e.zeta);
        }
        s
    }

    /// Fidelity after the final outer step.
    pub fn final_fidelity(&self) -> Option<f64> {
        self.trace.iter().rev().find(|e| !e.travel).map(|e| e.fidelity)
    }
}

/// Gradient of `fidelity(tweedie(x_t))` w.r.t. `x_t`, plus the noise
/// prediction and fidelity value at `x_t`.
pub fn guidance_grad_xt(
    x: &[f64],
    shape: StateShape,
    t: usize,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    fidelity: &dyn DataFidelity,
    mode: GradientMode,
) -> Result<GuidanceTerms> {
    let ab = schedule.alpha_bar(t);
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    match mode {
        GradientMode::Surrogate => {
            let eps = model.predict_eps(x, shape, t)?;
            let x0 = tweedie_from_eps(x, &eps, t, schedule);
            let (value, g0) = fidelity.value_and_grad(&x0)?;
            let grad = g0.iter().map(|g| g / sa).collect();
            Ok(GuidanceTerms { eps, x0, value, grad })
        }
        GradientMode::Full => {
            let mut captured: Option<(f64, Vec<f64>)> = None;
            let (eps, jtg) = model.predict_eps_vjp(x, shape, t, &mut |eps| {
                let x0 = tweedie_from_eps(x, eps, t, schedule);
                let (value, g0) = fidelity.value_and_grad(&x0)?;
                captured = Some((value, g0.clone()));
                Ok(g0)
            })?;
            let (value, g0) = captured.expect("vector-Jacobian seed evaluated");
            let grad = g0.iter().zip(&jtg).map(|(g, j)| (g - sn * j) / sa).collect();
            let x0 = tweedie_from_eps(x, &eps, t, schedule);
            Ok(GuidanceTerms { eps, x0, value, grad })
        }
    }
}

pub struct GuidanceTerms {
    pub eps: Vec<f64>,
    /// Tweedie estimate of the clean state.
    pub x0: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
}

fn step_size(cfg: &GuidanceConfig, schedule: &NoiseSchedule, t: usize, value: f64, curvature: f64) -> f64 {
    match cfg.step_rule {
        StepRule::Polyak => cfg.zeta0 * value / (curvature + 1e-12),
        StepRule::ResidualNormalized => cfg.zeta0 / (value + 1e-8),
        StepRule::Constant => cfg.zeta0,
        StepRule::GaussianLikelihood { noise_var, prior_var } => {
            let b = schedule.beta(t);
            let ab = schedule.alpha_bar(t);
            let spread = prior_var * (1.0 - ab) / (ab * prior_var + 1.0 - ab);
            cfg.zeta0 * b / (2.0 * (noise_var + spread) * (1.0 - b).sqrt())
        }
    }
}

struct Chain<'a> {
    shape: StateShape,
    model: &'a dyn ScoreModel,
    schedule: &'a NoiseSchedule,
    fidelity: &'a dyn DataFidelity,
    cfg: &'a GuidanceConfig,
    rng: Rng,
    trace: Vec<TraceEntry>,
    step_index: usize,
}

impl Chain<'_> {
    /// Denoising step from `x_t` followed by the guidance update.
    fn guided_step(&mut self, x: &[f64], t: usize, travel: bool) -> Result<Vec<f64>> {
        let mut terms = guidance_grad_xt(x, self.shape, t, self.model, self.schedule, self.fidelity, self.cfg.mode)?;
        let raw = terms.grad.clone();
        if self.cfg.precondition {
            self.fidelity.precondition(&terms.x0, &mut terms.grad);
        }
        let curvature: f64 = raw.iter().zip(&terms.grad).map(|(a, b)| a * b).sum();
        let zeta = step_size(self.cfg, self.schedule, t, terms.value, curvature);
        let mut next = denoise_with(x, &terms.eps, t, self.schedule, &mut self.rng);
        for (n, g) in next.iter_mut().zip(&terms.grad) {
            *n -= zeta * g;
        }
        let step = self.step_index;
        self.step_index += 1;
        if !zeta.is_finite() || !terms.value.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::GuidanceBlowup { step, zeta });
        }
        self.trace.push(TraceEntry {
            t,
            travel,
            fidelity: terms.value,
            zeta,
        });
        Ok(next)
    }
}

/// Guided sampling with time travel, started from `x_N ~ N(0, I)` drawn
/// from the configured seed.
pub fn reconstruct(
    shape: StateShape,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    fidelity: &dyn DataFidelity,
    cfg: &GuidanceConfig,
) -> Result<Reconstruction> {
    cfg.validate()?;
    let n = schedule.steps();
    let mut chain = Chain {
        shape,
        model,
        schedule,
        fidelity,
        cfg,
        rng: Rng::new(cfg.seed, 0x6D15),
        trace: Vec::with_capacity(n),
        step_index: 0,
    };
    let mut counts = StepCounts::default();
    let j = cfg.travel_depth;
    let mut x = chain.rng.normals(shape.len());
    for (k, t) in (1..=n).rev().enumerate() {
        x = chain.guided_step(&x, t, false)?;
        counts.outer += 1;
        let s = t - 1;
        if j > 0 && s + j < n && k % cfg.travel_stride == 0 {
            let mut y = noising_step(&x, s, j, schedule, &mut chain.rng)?;
            for u in (s + 1..=s + j).rev() {
                y = chain.guided_step(&y, u, true)?;
                counts.inner += 1;
            }
            counts.travels += 1;
            x = y;
        }
    }
    Ok(Reconstruction {
        state: x,
        trace: chain.trace,
        counts,
    })
}

/// Guided sampling without time travel.
pub fn guided_sample(
    shape: StateShape,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    fidelity: &dyn DataFidelity,
    cfg: &GuidanceConfig,
) -> Result<Reconstruction> {
    cfg.validate()?;
    let mut chain = Chain {
        shape,
        model,
        schedule,
        fidelity,
        cfg,
        rng: Rng::new(cfg.seed, 0x6D15),
        trace: Vec::new(),
        step_index: 0,
    };
    let mut x = chain.rng.normals(shape.len());
    for t in (1..=schedule.steps()).rev() {
        x = chain.guided_step(&x, t, false)?;
    }
    Ok(Reconstruction {
        state: x,
        trace: chain.trace,
        counts: StepCounts {
            outer: schedule.steps(),
            ..StepCounts::default()
        },
    })
}

/// Ptychographic reconstruction: guided sampling under the ℓ1 magnitude
/// fidelity, decoded to a complex object with both channels clamped to
/// `[−1, 1]`.
pub fn reconstruct_object(
    meas: &MeasurementSet,
    probe: &Probe,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    cfg: &GuidanceConfig,
) -> Result<(ComplexField, Reconstruction)> {
    let n = meas.object_size();
    meas.grid.check()?;
    let fidelity = L1Magnitude::new(meas, probe)?;
    let rec = reconstruct(StateShape::new(2, n, n), model, schedule, &fidelity, cfg)?;
    Ok((decode_object(&rec.state, n)?, rec))
}

pub fn decode_object(state: &[f64], n: usize) -> Result<ComplexField> {
    let mut img = TwoChannelImage::from_flat(n, n, state)?;
    img.clamp_unit();
    Ok(from_two_channel(&img))
}
