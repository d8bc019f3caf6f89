use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::ComplexField;

pub const DEFAULT_APERTURE: f64 = 0.35;
pub const DEFAULT_TAPER: f64 = 0.2;

/// Known illumination applied to every patch.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    field: ComplexField,
}

impl Probe {
    pub fn new(field: ComplexField) -> Result<Self> {
        if field.height() != field.width() {
            return Err(Error::InvalidProbe(format!(
                "probe must be square, got {}x{}",
                field.height(),
                field.width()
            )));
        }
        if field.max_abs() <= 0.0 {
            return Err(Error::InvalidProbe("probe is identically zero".into()));
        }
        Ok(Self { field })
    }

    pub fn width(&self) -> usize {
        self.field.width()
    }

    pub fn field(&self) -> &ComplexField {
        &self.field
    }

    pub fn max_abs_sqr(&self) -> f64 {
        let m = self.field.max_abs();
        m * m
    }
}

/// Radial profile of a disk of radius `radius` blurred by a Gaussian of width
/// `sigma`: `½·erfc((r − R)/(σ√2))`.
pub fn soft_disk(r: f64, radius: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return if r <= radius { 1.0 } else { 0.0 };
    }
    0.5 * libm::erfc((r - radius) / (sigma * std::f64::consts::SQRT_2))
}

/// Tapered disk probe, centred at `((w-1)/2, (w-1)/2)`, flat phase,
/// normalized to unit peak amplitude.
pub fn make_probe(width: usize, aperture_frac: f64, taper_frac: f64) -> Result<Probe> {
    if width < 4 {
        return Err(Error::Config(format!("probe width must be >= 4, got {width}")));
    }
    if aperture_frac <= 0.0 || taper_frac < 0.0 {
        return Err(Error::Config("probe aperture must be positive and taper non-negative".into()));
    }
    let w = width as f64;
    let centre = (w - 1.0) / 2.0;
    let radius = aperture_frac * w;
    let sigma = taper_frac * w;
    let mut amp: Vec<f64> = (0..width * width)
        .map(|i| {
            let (r, c) = ((i / width) as f64, (i % width) as f64);
            soft_disk((r - centre).hypot(c - centre), radius, sigma)
        })
        .collect();
    let peak = amp.iter().copied().fold(0.0, f64::max);
    for a in &mut amp {
        *a /= peak;
    }
    let field = ComplexField::from_vec(
        width,
        width,
        amp.into_iter().map(|a| Complex64::new(a, 0.0)).collect(),
    )?;
    Probe::new(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centre_is_unit() {
        let p = make_probe(32, DEFAULT_APERTURE, DEFAULT_TAPER).unwrap();
        assert!((p.field()[(15, 15)].norm() - 1.0).abs() < 1e-15);
        assert!((p.field()[(16, 16)].norm() - 1.0).abs() < 1e-15);
        assert!((p.field().max_abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn corner_is_dark() {
        // Independent evaluation: r = 15.5·√2, R = 11.2, σ = 6.4, peak at r = 0.5·√2.
        let r_corner = 15.5 * std::f64::consts::SQRT_2;
        let r_peak = 0.5 * std::f64::consts::SQRT_2;
        let f = |r: f64| 0.5 * libm::erfc((r - 11.2) / (6.4 * 2f64.sqrt()));
        let expected = f(r_corner) / f(r_peak);
        assert!(expected < 0.05);
        let p = make_probe(32, DEFAULT_APERTURE, DEFAULT_TAPER).unwrap();
        let corner = p.field()[(0, 0)].norm();
        assert!((corner - expected).abs() < 1e-12);
        assert!(corner < 0.05);
    }

    #[test]
    fn fourfold_symmetric() {
        let p = make_probe(16, DEFAULT_APERTURE, DEFAULT_TAPER).unwrap();
        let f = p.field();
        let w = 16;
        for r in 0..w {
            for c in 0..w {
                let v = f[(r, c)];
                assert_eq!(v, f[(c, w - 1 - r)]);
                assert_eq!(v, f[(w - 1 - r, w - 1 - c)]);
                assert_eq!(v, f[(r, w - 1 - c)]);
            }
        }
    }

    #[test]
    fn zero_probe_rejected() {
        assert!(matches!(
            Probe::new(ComplexField::zeros(4, 4)),
            Err(Error::InvalidProbe(_))
        ));
    }
}
