//! Sparse LTV channel, its GCE-BEM surrogate, and AWGN.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::numerics::ComplexMatrix;
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub delays: Vec<usize>,
    /// Doppler shifts normalized to the subcarrier spacing.
    pub dopplers: Vec<f64>,
    pub gains: Vec<C64>,
}

impl ChannelRealization {
    pub fn single(gain: C64, delay: usize, doppler: f64) -> Self {
        Self { delays: vec![delay], dopplers: vec![doppler], gains: vec![gain] }
    }

    pub fn paths(&self) -> usize {
        self.gains.len()
    }
}

/// Circular complex normal sample with unit variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Uniform delay profile with Jakes-distributed Doppler.
pub fn sample_channel<R: Rng + ?Sized>(
    rng: &mut R,
    paths: usize,
    l_prime: usize,
    nu_max: f64,
    delta_f: f64,
) -> ChannelRealization {
    assert!(paths >= 1 && l_prime >= 1);
    let delays = (0..paths).map(|_| rng.random_range(0..l_prime)).collect();
    let dopplers = (0..paths)
        .map(|_| {
            let theta: f64 = rng.random_range(0.0..2.0 * PI);
            nu_max / delta_f * theta.cos()
        })
        .collect();
    let gains = (0..paths).map(|_| complex_normal(rng)).collect();
    ChannelRealization { delays, dopplers, gains }
}

/// LTV channel on a signal whose first sample sits at absolute time index
/// `start`; the Doppler phase uses absolute time. Samples delayed past the
/// end are dropped.
pub fn apply_ltv_at(s: &[C64], start: i64, ch: &ChannelRealization, m_prime: usize) -> Vec<C64> {
    let mut r = vec![C64::new(0.0, 0.0); s.len()];
    for ((&d, &xi), &h) in ch.delays.iter().zip(&ch.dopplers).zip(&ch.gains) {
        let w = 2.0 * PI * xi / m_prime as f64;
        for i in d..s.len() {
            let k = start + i as i64;
            r[i] += h * s[i - d] * C64::from_polar(1.0, w * k as f64);
        }
    }
    r
}

pub fn apply_ltv(s: &[C64], ch: &ChannelRealization, m_prime: usize) -> Vec<C64> {
    apply_ltv_at(s, 0, ch, m_prime)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GceBemChannel {
    /// M_h×N coefficients indexed by (delay tap, Doppler basis).
    pub h_ce: ComplexMatrix,
    pub n_nu: f64,
    pub m_x_prime: usize,
}

impl GceBemChannel {
    /// Normalized Doppler (in units of Δf) of basis `k_nu` for an M'-point
    /// block, so the basis equals an LTV path with that shift.
    pub fn basis_doppler(&self, grid_value: f64, m_prime: usize) -> f64 {
        let n = self.h_ce.cols() as f64;
        grid_value * m_prime as f64 / (self.n_nu * n * self.m_x_prime as f64)
    }
}

pub fn apply_gce_bem_at(s: &[C64], start: i64, bem: &GceBemChannel) -> Vec<C64> {
    let (m_h, n) = bem.h_ce.shape();
    let c = (n as f64 - 1.0) / 2.0;
    let denom = bem.n_nu * n as f64 * bem.m_x_prime as f64;
    let mut r = vec![C64::new(0.0, 0.0); s.len()];
    let mut phases = vec![C64::new(0.0, 0.0); n];
    for (i, out) in r.iter_mut().enumerate() {
        let k = (start + i as i64) as f64;
        for (kn, p) in phases.iter_mut().enumerate() {
            *p = C64::from_polar(1.0, 2.0 * PI * (kn as f64 - c) * k / denom);
        }
        for kt in 0..m_h.min(i + 1) {
            let g: C64 = bem.h_ce.row(kt).iter().zip(&phases).map(|(h, p)| h * p).sum();
            *out += s[i - kt] * g;
        }
    }
    r
}

pub fn apply_gce_bem(s: &[C64], bem: &GceBemChannel) -> Vec<C64> {
    apply_gce_bem_at(s, 0, bem)
}

pub fn awgn_variance(p_s: f64, k_bps: f64, ebn0_linear: f64) -> Result<f64> {
    if !(p_s > 0.0 && k_bps > 0.0 && ebn0_linear > 0.0) {
        return Err(Error::ContractViolation(format!(
            "noise variance needs positive inputs (P_s={p_s}, k_bps={k_bps}, Eb/N0={ebn0_linear})"
        )));
    }
    Ok(p_s / (k_bps * ebn0_linear))
}

pub fn add_awgn<R: Rng + ?Sized>(rng: &mut R, s: &[C64], sigma_w_sq: f64) -> Vec<C64> {
    let sd = sigma_w_sq.sqrt();
    s.iter().map(|x| x + complex_normal(rng) * sd).collect()
}
