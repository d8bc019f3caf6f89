//! Binary field container and PGM preview export.
//!
//! Container layout (all little-endian):
//!
//! | offset | size | field                              |
//! |--------|------|------------------------------------|
//! | 0      | 4    | magic `PTYF`                       |
//! | 4      | 2    | version (`1`)                      |
//! | 6      | 2    | dtype tag: `1` = c128, `2` = f64   |
//! | 8      | 4    | height                             |
//! | 12     | 4    | width                              |
//! | 16     | 4    | channels                           |
//! | 20     | ...  | payload, channel-major, row-major  |
//!
//! A c128 element is two f64 values (re, im).

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComplexField, TwoChannelImage};

pub const MAGIC: &[u8; 4] = b"PTYF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u16)]
pub enum DType {
    C128 = 1,
    F64 = 2,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::C128 => 16,
            DType::F64 => 8,
        }
    }

    fn from_tag(tag: u16) -> Option<Self> {
        match tag {
            1 => Some(DType::C128),
            2 => Some(DType::F64),
            _ => None,
        }
    }
}

/// A real multi-channel image, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RealImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl RealImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{height}x{width} image needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels: 1,
            data,
        })
    }
}

/// Anything that can live in a container.
#[derive(Clone, Debug, PartialEq)]
pub enum Stored {
    Complex(ComplexField),
    TwoChannel(TwoChannelImage),
    Real(RealImage),
}

impl Stored {
    pub fn into_complex(self) -> Result<ComplexField> {
        match self {
            Stored::Complex(f) => Ok(f),
            _ => Err(Error::Format {
                offset: 6,
                msg: "expected a c128 field".into(),
            }),
        }
    }

    pub fn into_two_channel(self) -> Result<TwoChannelImage> {
        match self {
            Stored::TwoChannel(t) => Ok(t),
            _ => Err(Error::Format {
                offset: 16,
                msg: "expected a two-channel f64 image".into(),
            }),
        }
    }

    pub fn into_real(self) -> Result<RealImage> {
        match self {
            Stored::Real(r) => Ok(r),
            _ => Err(Error::Format {
                offset: 16,
                msg: "expected a single-channel f64 image".into(),
            }),
        }
    }
}

fn header(dtype: DType, h: usize, w: usize, channels: usize) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + h * w * channels * dtype.size());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(dtype as u16).to_le_bytes());
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    buf.extend_from_slice(&(channels as u32).to_le_bytes());
    buf
}

pub fn encode(item: &Stored) -> Vec<u8> {
    match item {
        Stored::Complex(f) => {
            let mut buf = header(DType::C128, f.height(), f.width(), 1);
            for z in f.data() {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
            buf
        }
        Stored::TwoChannel(t) => {
            let mut buf = header(DType::F64, t.height(), t.width(), 2);
            for v in t.amp().iter().chain(t.phase()) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf
        }
        Stored::Real(r) => {
            let mut buf = header(DType::F64, r.height, r.width, r.channels);
            for v in &r.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf
        }
    }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<Stored> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            msg: format!("header needs {HEADER_LEN} bytes, found {}", bytes.len()),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {:?}", &bytes[..4]),
        });
    }
    let version = u16_at(bytes, 4);
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let dtype = DType::from_tag(u16_at(bytes, 6)).ok_or_else(|| Error::Format {
        offset: 6,
        msg: format!("unknown dtype tag {}", u16_at(bytes, 6)),
    })?;
    let h = u32_at(bytes, 8) as usize;
    let w = u32_at(bytes, 12) as usize;
    let channels = u32_at(bytes, 16) as usize;
    let expected = h * w * channels * dtype.size();
    let actual = bytes.len() - HEADER_LEN;
    if actual != expected {
        return Err(Error::Format {
            offset: HEADER_LEN as u64,
            msg: format!("payload length mismatch: expected {expected} bytes, found {actual}"),
        });
    }
    let p = &bytes[HEADER_LEN..];
    match (dtype, channels) {
        (DType::C128, 1) => {
            let data = (0..h * w)
                .map(|i| Complex64::new(f64_at(p, 16 * i), f64_at(p, 16 * i + 8)))
                .collect();
            ComplexField::from_vec(h, w, data)
                .map(Stored::Complex)
                .map_err(|e| Error::Format {
                    offset: HEADER_LEN as u64,
                    msg: e.to_string(),
                })
        }
        (DType::C128, c) => Err(Error::Format {
            offset: 16,
            msg: format!("c128 containers hold one channel, header says {c}"),
        }),
        (DType::F64, c) => {
            let data: Vec<f64> = (0..h * w * c).map(|i| f64_at(p, 8 * i)).collect();
            if c == 2 {
                Ok(Stored::TwoChannel(TwoChannelImage::from_flat(h, w, &data)?))
            } else {
                Ok(Stored::Real(RealImage {
                    height: h,
                    width: w,
                    channels: c,
                    data,
                }))
            }
        }
    }
}

pub fn write_stored(path: &Path, item: &Stored) -> Result<()> {
    fs::write(path, encode(item)).map_err(|e| Error::io(path, e))
}

pub fn read_stored(path: &Path) -> Result<Stored> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_field(path: &Path, field: &ComplexField) -> Result<()> {
    write_stored(path, &Stored::Complex(field.clone()))
}

pub fn read_field(path: &Path) -> Result<ComplexField> {
    read_stored(path)?.into_complex()
}

/// Writes a 16-bit binary PGM, min-max scaled to `[0, 65535]`.
/// A constant image maps to all zeros.
pub fn export_pgm(path: &Path, height: usize, width: usize, values: &[f64]) -> Result<()> {
    let bytes = encode_pgm(height, width, values)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(height: usize, width: usize, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != height * width {
        return Err(Error::Dimension(format!(
            "PGM export of {height}x{width} needs {} values, got {}",
            height * width,
            values.len()
        )));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &v in values {
        let q = if range > 0.0 && range.is_finite() {
            (((v - lo) / range) * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        out.extend_from_slice(&q.to_be_bytes());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_field(n: usize) -> ComplexField {
        let mut rng = Rng::new(77, 0);
        ComplexField::from_fn(n, n, |_, _| Complex64::new(rng.normal(), rng.normal()))
    }

    #[test]
    fn complex_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.ptyf");
        let f = random_field(32);
        write_field(&p, &f).unwrap();
        let g = read_field(&p).unwrap();
        for (a, b) in f.data().iter().zip(g.data()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        let bytes = fs::read(&p).unwrap();
        assert_eq!(encode(&decode(&bytes).unwrap()), bytes);
    }

    #[test]
    fn two_channel_round_trip() {
        let t = TwoChannelImage::new(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6], vec![-0.1; 6]).unwrap();
        let back = decode(&encode(&Stored::TwoChannel(t.clone()))).unwrap();
        assert_eq!(back, Stored::TwoChannel(t));
    }

    #[test]
    fn truncated_payload_names_lengths() {
        let mut bytes = encode(&Stored::Complex(random_field(4)));
        bytes.truncate(bytes.len() - 5);
        match decode(&bytes) {
            Err(Error::Format { offset, msg }) => {
                assert_eq!(offset, HEADER_LEN as u64);
                assert!(msg.contains("expected 256"), "{msg}");
                assert!(msg.contains("found 251"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode(&Stored::Complex(random_field(2)));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Format { offset: 0, .. })));
        let mut bytes = encode(&Stored::Complex(random_field(2)));
        bytes[4] = 9;
        assert!(matches!(decode(&bytes), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn constant_pgm_is_black() {
        let bytes = encode_pgm(3, 3, &[0.7; 9]).unwrap();
        let header = b"P5\n3 3\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        assert!(bytes[header.len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn pgm_spans_full_range() {
        let bytes = encode_pgm(1, 3, &[-1.0, 0.0, 1.0]).unwrap();
        let px = &bytes[bytes.len() - 6..];
        assert_eq!(px, &[0, 0, 0x80, 0x00, 0xff, 0xff]);
    }
}
