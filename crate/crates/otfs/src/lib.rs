//! Baseband simulator for oversampled, pulse-shaped delay-Doppler modems.
//!
//! Two transceivers are provided: [`cp`] (cyclic prefix per delay block,
//! circular RRC shaping, embedded impulse pilot) and [`uw`] (null-space
//! precoded zero guard interval carrying a unique-word pilot). Both share the
//! LTV channel model in [`channel`], the GCE-BEM estimator in [`estimation`]
//! and the FT-domain LMMSE detector in [`detection`].

pub mod analysis;
pub mod channel;
pub mod config;
pub mod cp;
pub mod detection;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod modem;
pub mod numerics;
pub mod numerology;
pub mod uw;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
