//! Ptychographic imaging toolkit: measurement simulation, classical
//! iterative reconstruction (rPIE, accelerated Wirtinger flow) and
//! diffusion-prior reconstruction with ℓ1 data-consistency guidance and
//! time-travel resampling.

pub mod autodiff;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod fft;
pub mod field;
pub mod guided;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
pub use field::{from_two_channel, to_two_channel, ComplexField, TwoChannelImage};
pub use num_complex::Complex64;
pub use rng::Rng;
