//! Classical baseline reconstructions: rPIE and accelerated Wirtinger flow.

pub mod awf;
pub mod rpie;

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::model::{forward, MeasurementSet, Probe};
use crate::rng::Rng;

pub use awf::loss_and_grad as awf_loss_and_grad;
pub use rpie::rpie_step;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Rpie,
    Awf,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rpie" => Ok(Method::Rpie),
            "awf" => Ok(Method::Awf),
            other => Err(Error::Config(format!(
                "unknown solver `{other}` (valid: rpie, awf)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    /// `f₀ = 0.9 + 0i` everywhere.
    Flat,
    /// Unit amplitude, uniformly random phase.
    Random,
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(InitMode::Flat),
            "random" => Ok(InitMode::Random),
            other => Err(Error::Config(format!("unknown init mode `{other}` (valid: flat, random)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub iterations: usize,
    pub rpie_alpha: f64,
    /// Initial (and maximal) AWF step size.
    pub awf_step: f64,
    pub awf_momentum: bool,
    pub seed: u64,
    pub init: InitMode,
    /// Stop once the relative fidelity change stays below `early_stop_tol`
    /// for `early_stop_window` consecutive iterations. Zero window disables.
    pub early_stop_tol: f64,
    pub early_stop_window: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            rpie_alpha: 0.1,
            awf_step: 0.05,
            awf_momentum: true,
            seed: 0,
            init: InitMode::Flat,
            early_stop_tol: 1e-10,
            early_stop_window: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.rpie_alpha > 0.0 && self.rpie_alpha <= 1.0) {
            return Err(Error::Config(format!(
                "rPIE alpha must lie in (0, 1], got {}",
                self.rpie_alpha
            )));
        }
        if !(self.awf_step > 0.0) {
            return Err(Error::Config("AWF step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveTrace {
    /// Σᵢ ‖yᵢ − |A_i f|‖² after each iteration.
    pub fidelity: Vec<f64>,
    pub object: ComplexField,
    pub wall_time: f64,
    pub early_stopped: bool,
}

impl SolveTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,fidelity\n");
        for (i, v) in self.fidelity.iter().enumerate() {
            let _ = writeln!(s, "{},{:e}", i + 1, v);
        }
        s
    }
}

pub fn initial_object(n: usize, mode: InitMode, seed: u64) -> ComplexField {
    match mode {
        InitMode::Flat => ComplexField::filled(n, n, Complex64::new(0.9, 0.0)),
        InitMode::Random => {
            let mut rng = Rng::new(seed, 0x1417);
            ComplexField::from_fn(n, n, |_, _| {
                Complex64::from_polar(1.0, rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI))
            })
        }
    }
}

struct EarlyStop {
    tol: f64,
    window: usize,
    run: usize,
    last: Option<f64>,
}

impl EarlyStop {
    fn new(cfg: &SolverConfig) -> Self {
        Self {
            tol: cfg.early_stop_tol,
            window: cfg.early_stop_window,
            run: 0,
            last: None,
        }
    }

    fn update(&mut self, value: f64) -> bool {
        if self.window == 0 {
            return false;
        }
        if let Some(prev) = self.last {
            let rel = (prev - value).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if rel < self.tol {
                self.run += 1;
            } else {
                self.run = 0;
            }
        }
        self.last = Some(value);
        self.run >= self.window
    }
}

fn check_inputs(probe: &Probe, meas: &MeasurementSet) -> Result<()> {
    if probe.width() != meas.probe_width() {
        return Err(Error::Dimension(format!(
            "probe width {} does not match measurement width {}",
            probe.width(),
            meas.probe_width()
        )));
    }
    meas.grid.check()
}

pub fn rpie_solve(meas: &MeasurementSet, probe: &Probe, cfg: &SolverConfig) -> Result<SolveTrace> {
    cfg.validate()?;
    check_inputs(probe, meas)?;
    let start = Instant::now();
    let mut f = initial_object(meas.object_size(), cfg.init, cfg.seed);
    let mut order: Vec<usize> = (0..meas.grid.len()).collect();
    let mut rng = Rng::new(cfg.seed, 0x2E1E);
    let mut stop = EarlyStop::new(cfg);
    let mut fidelity = Vec::with_capacity(cfg.iterations);
    let mut early = false;
    for _ in 0..cfg.iterations {
        rng.shuffle(&mut order);
        rpie_step(&mut f, probe, meas, cfg.rpie_alpha, &order)?;
        let v = forward::amplitude_residual_sq(&f, probe, meas)?;
        fidelity.push(v);
        if stop.update(v) {
            early = true;
            break;
        }
    }
    Ok(SolveTrace {
        fidelity,
        object: f,
        wall_time: start.elapsed().as_secs_f64(),
        early_stopped: early,
    })
}

const DIVERGENCE_FACTOR: f64 = 1e6;
const MAX_HALVINGS: usize = 40;

/// Wirtinger-flow descent with Nesterov momentum. The step is found by
/// halving until the loss falls below the current iterate's loss, so the
/// recorded loss is monotone; when the extrapolated point admits no such step,
/// momentum restarts from the current iterate.
pub fn awf_solve(meas: &MeasurementSet, probe: &Probe, cfg: &SolverConfig) -> Result<SolveTrace> {
    cfg.validate()?;
    check_inputs(probe, meas)?;
    let start = Instant::now();
    let mut f = initial_object(meas.object_size(), cfg.init, cfg.seed);
    let mut prev = f.clone();
    let mut current = awf::loss(&f, probe, meas)?;
    let limit = DIVERGENCE_FACTOR * current.max(f64::MIN_POSITIVE);
    let mut step = cfg.awf_step;
    let mut k = 0usize;
    let mut stop = EarlyStop::new(cfg);
    let mut fidelity = Vec::with_capacity(cfg.iterations);
    let mut early = false;
    for it in 0..cfg.iterations {
        let mu = if cfg.awf_momentum { k as f64 / (k as f64 + 3.0) } else { 0.0 };
        let mut accepted = None;
        for restart in [false, true] {
            if restart && mu == 0.0 {
                break;
            }
            let v = if restart || mu == 0.0 { f.clone() } else { awf::extrapolate(&f, &prev, mu) };
            let (_, g) = awf::loss_and_grad(&v, probe, meas)?;
            let mut s = step;
            for _ in 0..MAX_HALVINGS {
                let cand = awf::axpy(&v, -s, &g);
                let l = awf::loss(&cand, probe, meas)?;
                if !l.is_finite() || l > limit {
                    return Err(Error::Diverged {
                        iteration: it,
                        loss: l,
                        limit,
                    });
                }
                if l < current {
                    accepted = Some((cand, l, s, restart));
                    break;
                }
                s *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        match accepted {
            Some((cand, l, s, restarted)) => {
                prev = std::mem::replace(&mut f, cand);
                current = l;
                step = (2.0 * s).min(cfg.awf_step);
                k = if restarted { 0 } else { k + 1 };
            }
            None => {
                // no descent direction left at working precision
                fidelity.push(current);
                early = true;
                break;
            }
        }
        fidelity.push(current);
        if stop.update(current) {
            early = true;
            break;
        }
    }
    Ok(SolveTrace {
        fidelity,
        object: f,
        wall_time: start.elapsed().as_secs_f64(),
        early_stopped: early,
    })
}

pub fn solve(method: Method, meas: &MeasurementSet, probe: &Probe, cfg: &SolverConfig) -> Result<SolveTrace> {
    match method {
        Method::Rpie => rpie_solve(meas, probe, cfg),
        Method::Awf => awf_solve(meas, probe, cfg),
    }
}
