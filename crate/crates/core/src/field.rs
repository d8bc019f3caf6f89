//! Complex fields and the two-channel amplitude/phase representation.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A row-major 2-D array of complex values.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, Complex64::new(0.0, 0.0))
    }

    pub fn filled(height: usize, width: usize, value: Complex64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{}x{} field needs {} values, got {}",
                height,
                width,
                height * width,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Dimension("field contains non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Builds a field from polar components.
    pub fn from_polar(height: usize, width: usize, amplitude: &[f64], phase: &[f64]) -> Result<Self> {
        if amplitude.len() != height * width || phase.len() != height * width {
            return Err(Error::Dimension("polar component length mismatch".into()));
        }
        let data = amplitude
            .iter()
            .zip(phase)
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect();
        Self::from_vec(height, width, data)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn amplitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    pub fn phase(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.arg()).collect()
    }

    /// Squared ℓ2 norm.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// ⟨self, other⟩ = Σ conj(self)·other.
    pub fn inner(&self, other: &ComplexField) -> Complex64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexField {
        ComplexField {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> ComplexField {
        self.map(|z| z * s)
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &ComplexField) -> ComplexField {
        debug_assert_eq!(self.shape(), other.shape());
        ComplexField {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexField {
    type Output = Complex64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.width + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexField {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.width + c]
    }
}

/// Real-valued `[2, H, W]` image: normalized amplitude and phase channels.
///
/// The mapping from a complex object is `amp = 2|x| - 1`, `phase = arg(x) / π`,
/// so objects with `|x| ∈ [0, 1]` land in `[-1, 1]²`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoChannelImage {
    height: usize,
    width: usize,
    amp: Vec<f64>,
    phase: Vec<f64>,
}

impl TwoChannelImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            amp: vec![0.0; height * width],
            phase: vec![0.0; height * width],
        }
    }

    pub fn new(height: usize, width: usize, amp: Vec<f64>, phase: Vec<f64>) -> Result<Self> {
        let n = height * width;
        if amp.len() != n || phase.len() != n {
            return Err(Error::Dimension(format!(
                "two-channel {}x{} image needs {} values per channel, got {} and {}",
                height,
                width,
                n,
                amp.len(),
                phase.len()
            )));
        }
        Ok(Self {
            height,
            width,
            amp,
            phase,
        })
    }

    /// Builds from a flat channel-major `[2, H, W]` buffer.
    pub fn from_flat(height: usize, width: usize, flat: &[f64]) -> Result<Self> {
        let n = height * width;
        if flat.len() != 2 * n {
            return Err(Error::Dimension(format!(
                "flat two-channel buffer needs {} values, got {}",
                2 * n,
                flat.len()
            )));
        }
        Ok(Self {
            height,
            width,
            amp: flat[..n].to_vec(),
            phase: flat[n..].to_vec(),
        })
    }

    /// Channel-major `[2, H, W]` copy.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.amp.len());
        v.extend_from_slice(&self.amp);
        v.extend_from_slice(&self.phase);
        v
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn amp(&self) -> &[f64] {
        &self.amp
    }

    #[inline]
    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    #[inline]
    pub fn amp_mut(&mut self) -> &mut [f64] {
        &mut self.amp
    }

    #[inline]
    pub fn phase_mut(&mut self) -> &mut [f64] {
        &mut self.phase
    }

    /// Clamps both channels to `[-1, 1]`.
    pub fn clamp_unit(&mut self) {
        for v in self.amp.iter_mut().chain(self.phase.iter_mut()) {
            *v = v.clamp(-1.0, 1.0);
        }
    }
}

/// Maps a complex object to normalized amplitude/phase channels.
///
/// Amplitudes above 1 are clamped; the second element counts how many were.
pub fn to_two_channel(x: &ComplexField) -> (TwoChannelImage, usize) {
    let mut clamped = 0;
    let mut amp = Vec::with_capacity(x.len());
    let mut phase = Vec::with_capacity(x.len());
    for z in x.data() {
        let mut a = z.norm();
        if a > 1.0 {
            a = 1.0;
            clamped += 1;
        }
        amp.push(2.0 * a - 1.0);
        phase.push(z.arg() / PI);
    }
    if clamped > 0 {
        log::warn!("to_two_channel: clamped {clamped} amplitudes above 1");
    }
    let img = TwoChannelImage {
        height: x.height(),
        width: x.width(),
        amp,
        phase,
    };
    (img, clamped)
}

/// Inverse of [`to_two_channel`]. No clamping is applied, so the map is smooth
/// everywhere (a negative amplitude channel value below -1 yields a
/// sign-flipped complex value).
pub fn from_two_channel(t: &TwoChannelImage) -> ComplexField {
    let data = t
        .amp
        .iter()
        .zip(&t.phase)
        .map(|(&a, &p)| Complex64::from_polar(0.5 * (a + 1.0), PI * p))
        .collect();
    ComplexField {
        height: t.height,
        width: t.width,
        data,
    }
}

/// Chain rule through [`from_two_channel`].
///
/// Given the Wirtinger-style gradient `g = ∂L/∂re + i ∂L/∂im` of a real
/// functional w.r.t. the complex field, returns the gradient w.r.t. the two
/// normalized channels.
pub fn two_channel_pullback(t: &TwoChannelImage, g: &ComplexField) -> TwoChannelImage {
    let n = t.amp.len();
    let mut ga = Vec::with_capacity(n);
    let mut gp = Vec::with_capacity(n);
    for i in 0..n {
        let a = 0.5 * (t.amp[i] + 1.0);
        let phi = PI * t.phase[i];
        let (s, c) = phi.sin_cos();
        let gi = g.data()[i];
        // x = a·e^{iφ}: ∂x/∂a = e^{iφ}, ∂x/∂φ = i·a·e^{iφ}
        let d_a = gi.re * c + gi.im * s;
        let d_phi = a * (-gi.re * s + gi.im * c);
        ga.push(0.5 * d_a);
        gp.push(PI * d_phi);
    }
    TwoChannelImage {
        height: t.height,
        width: t.width,
        amp: ga,
        phase: gp,
    }
}
