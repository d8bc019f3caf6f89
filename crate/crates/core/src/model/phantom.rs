//! Synthetic complex objects: soft-edged absorbing blobs on a flat background
//! with phase correlated to absorption plus a smooth random field.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomParams {
    pub background: f64,
    pub min_blobs: usize,
    pub max_blobs: usize,
    pub min_factor: f64,
    pub max_factor: f64,
    /// Phase added per unit of absorption `1 - amplitude`.
    pub phase_scale: f64,
    /// Peak amplitude (radians) of each of the two low-frequency phase modes.
    pub lowfreq_amplitude: f64,
    /// Edge softness relative to the normalized ellipse radius.
    pub edge: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            background: 0.9,
            min_blobs: 3,
            max_blobs: 8,
            min_factor: 0.4,
            max_factor: 0.8,
            phase_scale: 1.0,
            lowfreq_amplitude: 0.3,
            edge: 0.08,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub object: ComplexField,
    pub seed: u64,
    pub params: PhantomParams,
}

pub const MIN_AMPLITUDE: f64 = 0.1;

struct Blob {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    factor: f64,
}

pub fn make_phantom(n_side: usize, seed: u64, params: &PhantomParams) -> Result<Phantom> {
    if n_side < 16 {
        return Err(Error::Config(format!("phantom side must be >= 16, got {n_side}")));
    }
    if params.min_blobs > params.max_blobs || params.min_factor > params.max_factor {
        return Err(Error::Config("phantom ranges are inverted".into()));
    }
    let mut rng = Rng::new(seed, 0);
    let n = n_side as f64;
    let count = params.min_blobs + rng.below(params.max_blobs - params.min_blobs + 1);
    let blobs: Vec<Blob> = (0..count)
        .map(|_| {
            let theta = rng.uniform_range(0.0, PI);
            Blob {
                cy: rng.uniform_range(0.15 * n, 0.85 * n),
                cx: rng.uniform_range(0.15 * n, 0.85 * n),
                a: rng.uniform_range(0.06 * n, 0.2 * n),
                b: rng.uniform_range(0.06 * n, 0.2 * n),
                cos: theta.cos(),
                sin: theta.sin(),
                factor: rng.uniform_range(params.min_factor, params.max_factor),
            }
        })
        .collect();

    let mut modes = Vec::with_capacity(2);
    for _ in 0..2 {
        let (u, v) = loop {
            let u = rng.int_inclusive(-2, 2);
            let v = rng.int_inclusive(-2, 2);
            if u != 0 || v != 0 {
                break (u as f64, v as f64);
            }
        };
        let amp = rng.uniform_range(0.0, params.lowfreq_amplitude);
        let shift = rng.uniform_range(-PI, PI);
        modes.push((u, v, amp, shift));
    }

    let mut amplitude = vec![0.0; n_side * n_side];
    let mut phase = vec![0.0; n_side * n_side];
    for r in 0..n_side {
        for c in 0..n_side {
            let (y, x) = (r as f64, c as f64);
            let mut a = params.background;
            for bl in &blobs {
                let dy = y - bl.cy;
                let dx = x - bl.cx;
                let u = (dx * bl.cos + dy * bl.sin) / bl.a;
                let v = (-dx * bl.sin + dy * bl.cos) / bl.b;
                let rho = (u * u + v * v).sqrt();
                let mask = 1.0 / (1.0 + ((rho - 1.0) / params.edge).exp());
                a *= 1.0 - (1.0 - bl.factor) * mask;
            }
            let a = a.clamp(MIN_AMPLITUDE, 1.0);
            let field: f64 = modes
                .iter()
                .map(|&(u, v, amp, shift)| amp * (2.0 * PI * (u * y + v * x) / n + shift).cos())
                .sum();
            let p = params.phase_scale * (1.0 - a) + field;
            amplitude[r * n_side + c] = a;
            phase[r * n_side + c] = wrap_phase(p);
        }
    }
    Ok(Phantom {
        object: ComplexField::from_polar(n_side, n_side, &amplitude, &phase)?,
        seed,
        params: params.clone(),
    })
}

/// Wraps an angle into `[-π, π]`.
pub fn wrap_phase(p: f64) -> f64 {
    let w = (p + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI && p > 0.0 {
        PI
    } else {
        w
    }
}
