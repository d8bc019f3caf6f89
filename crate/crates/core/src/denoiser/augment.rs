//! Random rotation, scaling and cropping of two-channel training images.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::field::TwoChannelImage;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentationPolicy {
    /// Angles are drawn uniformly from `[−max_rotation, max_rotation]` radians.
    pub max_rotation: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub patch: usize,
    /// Uniformly placed crop when set, centered otherwise.
    pub random_crop: bool,
}

impl AugmentationPolicy {
    pub fn new(patch: usize) -> Self {
        Self {
            max_rotation: std::f64::consts::PI,
            scale_min: 0.8,
            scale_max: 1.25,
            patch,
            random_crop: true,
        }
    }

    /// No rotation, unit scale, centered crop.
    pub fn identity(patch: usize) -> Self {
        Self {
            max_rotation: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            patch,
            random_crop: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || !(self.scale_min > 0.0 && self.scale_min <= self.scale_max) || !(self.max_rotation >= 0.0) {
            return Err(Error::Config(format!("invalid augmentation policy {self:?}")));
        }
        Ok(())
    }
}

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

fn bilinear(plane: &[f64], n_rows: usize, n_cols: usize, r: f64, c: f64) -> f64 {
    let r0 = r.floor();
    let c0 = c.floor();
    let fr = r - r0;
    let fc = c - c0;
    let (r0, c0) = (r0 as isize, c0 as isize);
    let at = |dr: isize, dc: isize| plane[reflect(r0 + dr, n_rows) * n_cols + reflect(c0 + dc, n_cols)];
    let top = if fc == 0.0 { at(0, 0) } else { at(0, 0) * (1.0 - fc) + at(0, 1) * fc };
    if fr == 0.0 {
        return top;
    }
    let bottom = if fc == 0.0 { at(1, 0) } else { at(1, 0) * (1.0 - fc) + at(1, 1) * fc };
    top * (1.0 - fr) + bottom * fr
}

/// `(cos, sin)` with lattice-exact values at multiples of π/2.
fn rotation(angle: f64) -> (f64, f64) {
    let quarter = angle / FRAC_PI_2;
    if (quarter - quarter.round()).abs() < 1e-12 {
        match (quarter.round() as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        (angle.cos(), angle.sin())
    }
}

/// Resamples a `patch × patch` window centered at `center` (row, col) of
/// the source, rotated by `angle` and magnified by `scale`. Boundaries
/// reflect; both channels are clamped to `[−1, 1]` afterwards.
pub fn warp(src: &TwoChannelImage, patch: usize, angle: f64, scale: f64, center: (f64, f64)) -> Result<TwoChannelImage> {
    let (h, w) = src.shape();
    if h < patch || w < patch {
        return Err(Error::Dimension(format!("source {h}×{w} smaller than patch {patch}")));
    }
    let (cos, sin) = rotation(angle);
    let half = (patch as f64 - 1.0) / 2.0;
    let mut amp = Vec::with_capacity(patch * patch);
    let mut phase = Vec::with_capacity(patch * patch);
    for i in 0..patch {
        for j in 0..patch {
            let u = (i as f64 - half) / scale;
            let v = (j as f64 - half) / scale;
            let r = center.0 + cos * u - sin * v;
            let c = center.1 + sin * u + cos * v;
            amp.push(bilinear(src.amp(), h, w, r, c).clamp(-1.0, 1.0));
            phase.push(bilinear(src.phase(), h, w, r, c).clamp(-1.0, 1.0));
        }
    }
    TwoChannelImage::new(patch, patch, amp, phase)
}

pub fn augment(src: &TwoChannelImage, policy: &AugmentationPolicy, rng: &mut Rng) -> Result<TwoChannelImage> {
    policy.validate()?;
    let (h, w) = src.shape();
    if h < policy.patch || w < policy.patch {
        return Err(Error::Dimension(format!("source {h}×{w} smaller than patch {}", policy.patch)));
    }
    let angle = if policy.max_rotation > 0.0 {
        rng.uniform_range(-policy.max_rotation, policy.max_rotation)
    } else {
        0.0
    };
    let scale = if policy.scale_max > policy.scale_min {
        rng.uniform_range(policy.scale_min, policy.scale_max)
    } else {
        policy.scale_min
    };
    let mid = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let center = if policy.random_crop {
        let (cos, sin) = rotation(angle);
        let reach = (policy.patch as f64 - 1.0) / 2.0 / scale * (cos.abs() + sin.abs());
        let pick = |rng: &mut Rng, n: usize, m: f64| {
            let hi = n as f64 - 1.0 - reach;
            if reach <= hi {
                rng.uniform_range(reach, hi)
            } else {
                m
            }
        };
        let r = pick(rng, h, mid.0);
        let c = pick(rng, w, mid.1);
        (r, c)
    } else {
        mid
    };
    warp(src, policy.patch, angle, scale, center)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> TwoChannelImage {
        let amp = (0..n * n).map(|i| (i as f64 / (n * n) as f64) * 2.0 - 1.0).collect();
        let phase = (0..n * n).map(|i| ((i * 7 % 13) as f64 / 13.0) - 0.5).collect();
        TwoChannelImage::new(n, n, amp, phase).unwrap()
    }

    #[test]
    fn identity_policy_extracts_the_center() {
        let src = ramp(12);
        let out = augment(&src, &AugmentationPolicy::identity(8), &mut Rng::new(0, 0)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(out.amp()[i * 8 + j], src.amp()[(i + 2) * 12 + j + 2]);
                assert_eq!(out.phase()[i * 8 + j], src.phase()[(i + 2) * 12 + j + 2]);
            }
        }
    }

    #[test]
    fn quarter_turn_permutes_indices() {
        let src = ramp(8);
        let out = warp(&src, 8, FRAC_PI_2, 1.0, (3.5, 3.5)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                // r = 3.5 − (j − 3.5), c = i
                assert_eq!(out.amp()[i * 8 + j], src.amp()[(7 - j) * 8 + i]);
            }
        }
    }

    #[test]
    fn reflect_stays_in_range() {
        for i in -30..30 {
            assert!(reflect(i, 5) < 5);
        }
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(5, 5), 3);
    }

    #[test]
    fn small_source_is_rejected() {
        let src = ramp(6);
        assert!(augment(&src, &AugmentationPolicy::identity(8), &mut Rng::new(0, 0)).is_err());
    }
}
