//! Delay-domain leakage of the embedded pilot, Welch PSD, block PAPR and
//! multiplication/memory counts.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::cp::rrc_spectrum;
use crate::numerics::dft_in_place;
use crate::numerology::{Numerology, Variant};
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct LeakageProfile {
    /// DD response of a unit pilot along delay, normalized by `x0·h0·√Q`.
    pub phi: Vec<C64>,
    /// Aliased squared filter with the fractional-delay phase.
    pub psi_hat: Vec<C64>,
    pub energy_db: Vec<f64>,
}

impl LeakageProfile {
    pub fn peak_bin(&self) -> usize {
        (0..self.phi.len())
            .max_by(|&a, &b| self.phi[a].norm_sqr().total_cmp(&self.phi[b].norm_sqr()))
            .unwrap_or(0)
    }

    pub fn total_energy(&self) -> f64 {
        self.phi.iter().map(|x| x.norm_sqr()).sum()
    }

    /// Bins other than the peak whose energy exceeds `threshold` (linear).
    pub fn interfered_bins(&self, threshold: f64) -> usize {
        let peak = self.peak_bin();
        self.phi.iter().enumerate().filter(|&(i, x)| i != peak && x.norm_sqr() > threshold).count()
    }
}

pub fn leakage_profile(m: usize, q: usize, alpha: f64, p0: usize, k_tau: usize) -> Result<LeakageProfile> {
    if k_tau >= m * q || p0 >= m {
        return Err(Error::OutOfBounds(format!("k_tau = {k_tau} or p0 = {p0} outside the grid")));
    }
    let psi = rrc_spectrum(m, q, alpha)?;
    let v = psi.values();
    let psi_hat: Vec<C64> = (0..m)
        .map(|l| {
            (0..q)
                .map(|k| C64::from_polar(v[l + k * m].powi(2), -2.0 * PI * ((k_tau * k) % q) as f64 / q as f64))
                .sum()
        })
        .collect();
    let shift = p0 as f64 + k_tau as f64 / q as f64;
    let phi: Vec<C64> = (0..m)
        .map(|mm| {
            psi_hat
                .iter()
                .enumerate()
                .map(|(l, p)| p * C64::from_polar(1.0, -2.0 * PI * l as f64 * (shift - mm as f64) / m as f64))
                .sum::<C64>()
                / m as f64
        })
        .collect();
    let energy_db = phi.iter().map(|x| 10.0 * x.norm_sqr().log10()).collect();
    Ok(LeakageProfile { phi, psi_hat, energy_db })
}

pub fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos()).collect()
}

/// Averaged windowed periodogram; accumulators over disjoint signals merge.
#[derive(Clone, Debug)]
pub struct WelchAccumulator {
    window: Vec<f64>,
    hop: usize,
    sum: Vec<f64>,
    segments: usize,
}

impl WelchAccumulator {
    pub fn new(seg_len: usize, overlap: f64, window: Vec<f64>) -> Result<Self> {
        if seg_len == 0 || window.len() != seg_len || !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidDimension(format!(
                "segment {seg_len}, window {}, overlap {overlap}",
                window.len()
            )));
        }
        let hop = ((seg_len as f64 * (1.0 - overlap)).round() as usize).max(1);
        Ok(Self { window, hop, sum: vec![0.0; seg_len], segments: 0 })
    }

    pub fn push(&mut self, s: &[C64]) -> Result<()> {
        let len = self.window.len();
        if s.len() < len {
            return Err(Error::OutOfBounds(format!("signal of {} samples, segment {len}", s.len())));
        }
        let wpow: f64 = self.window.iter().map(|w| w * w).sum::<f64>() / len as f64;
        let mut buf = vec![C64::new(0.0, 0.0); len];
        let mut start = 0;
        while start + len <= s.len() {
            for ((b, x), w) in buf.iter_mut().zip(&s[start..start + len]).zip(&self.window) {
                *b = x * w;
            }
            dft_in_place(&mut buf, false);
            for (acc, x) in self.sum.iter_mut().zip(&buf) {
                *acc += x.norm_sqr() / wpow;
            }
            self.segments += 1;
            start += self.hop;
        }
        Ok(())
    }

    pub fn merge(mut self, other: &Self) -> Result<Self> {
        if self.sum.len() != other.sum.len() || self.hop != other.hop {
            return Err(Error::SizeMismatch("Welch accumulators differ in setup".into()));
        }
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        self.segments += other.segments;
        Ok(self)
    }

    pub fn finish(&self) -> Result<Psd> {
        if self.segments == 0 {
            return Err(Error::Undefined("no segments accumulated".into()));
        }
        let len = self.sum.len();
        let h = len / 2;
        // centered: bin k maps to (k - h)/len cycles per sample
        let freq = (0..len).map(|k| (k as f64 - h as f64) / len as f64).collect();
        let power = (0..len).map(|k| self.sum[(k + len - h) % len] / self.segments as f64).collect();
        Ok(Psd { freq, power })
    }
}

/// Power per frequency bin, frequencies in cycles/sample over [-½, ½).
#[derive(Clone, Debug, PartialEq)]
pub struct Psd {
    pub freq: Vec<f64>,
    pub power: Vec<f64>,
}

impl Psd {
    /// dB relative to the mean over |f| ≤ `band_edge`.
    pub fn relative_db(&self, band_edge: f64) -> Result<Vec<f64>> {
        let inband: Vec<f64> =
            self.freq.iter().zip(&self.power).filter(|(f, _)| f.abs() <= band_edge).map(|(_, p)| *p).collect();
        if inband.is_empty() {
            return Err(Error::Undefined(format!("no bins within |f| <= {band_edge}")));
        }
        let mean = inband.iter().sum::<f64>() / inband.len() as f64;
        Ok(self.power.iter().map(|p| 10.0 * (p / mean).log10()).collect())
    }

    /// Relative level (dB) averaged over the two bins nearest ±f.
    pub fn level_at(&self, f: f64, band_edge: f64) -> Result<f64> {
        let db = self.relative_db(band_edge)?;
        let nearest = |target: f64| {
            (0..self.freq.len())
                .min_by(|&a, &b| (self.freq[a] - target).abs().total_cmp(&(self.freq[b] - target).abs()))
                .expect("nonempty")
        };
        let lin = (10f64.powf(db[nearest(f)] / 10.0) + 10f64.powf(db[nearest(-f)] / 10.0)) / 2.0;
        Ok(10.0 * lin.log10())
    }
}

pub fn welch_psd(s: &[C64], seg_len: usize, overlap: f64, window: Vec<f64>) -> Result<Psd> {
    let mut acc = WelchAccumulator::new(seg_len, overlap, window)?;
    acc.push(s)?;
    acc.finish()
}

/// Per-block peak power and the running energy for the ensemble mean.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PaprAccumulator {
    pub peaks: Vec<f64>,
    energy: f64,
    samples: usize,
}

impl PaprAccumulator {
    pub fn push_blocks(&mut self, s: &[C64], block_len: usize) {
        for b in s.chunks_exact(block_len) {
            let p: Vec<f64> = b.iter().map(|x| x.norm_sqr()).collect();
            self.peaks.push(p.iter().copied().fold(0.0, f64::max));
            self.energy += p.iter().sum::<f64>();
            self.samples += b.len();
        }
    }

    pub fn merge(mut self, other: &Self) -> Self {
        self.peaks.extend_from_slice(&other.peaks);
        self.energy += other.energy;
        self.samples += other.samples;
        self
    }

    pub fn mean_power(&self) -> f64 {
        self.energy / self.samples as f64
    }

    /// PAPR of every block in dB against the ensemble mean power.
    pub fn papr_db(&self) -> Result<Vec<f64>> {
        if self.samples == 0 || self.energy == 0.0 {
            return Err(Error::Undefined("no signal energy accumulated".into()));
        }
        let mean = self.mean_power();
        Ok(self.peaks.iter().map(|p| 10.0 * (p / mean).log10()).collect())
    }

    pub fn finish(&self) -> Result<PaprCcdf> {
        let mut v = self.papr_db()?;
        v.sort_by(f64::total_cmp);
        Ok(PaprCcdf { sorted_db: v })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PaprCcdf {
    pub sorted_db: Vec<f64>,
}

impl PaprCcdf {
    /// P(PAPR > x).
    pub fn ccdf(&self, x: f64) -> f64 {
        let below = self.sorted_db.partition_point(|&v| v <= x);
        (self.sorted_db.len() - below) as f64 / self.sorted_db.len() as f64
    }

    /// Smallest threshold whose exceedance probability is at most `p`.
    pub fn threshold_at(&self, p: f64) -> f64 {
        let n = self.sorted_db.len();
        let keep = ((1.0 - p) * n as f64).ceil() as usize;
        self.sorted_db[keep.clamp(1, n) - 1]
    }

    /// (threshold dB, probability) pairs at every distinct sample.
    pub fn table(&self) -> Vec<(f64, f64)> {
        let n = self.sorted_db.len() as f64;
        self.sorted_db.iter().enumerate().map(|(i, &x)| (x, (n - 1.0 - i as f64) / n)).collect()
    }
}

pub fn papr_ccdf(blocks: &[Vec<C64>]) -> Result<PaprCcdf> {
    let mut acc = PaprAccumulator::default();
    for b in blocks {
        acc.push_blocks(b, b.len().max(1));
    }
    acc.finish()
}

/// Complex multiplications per frame and memory in complex samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexityReport {
    pub tx: u64,
    pub omega_ce: u64,
    pub h_ce: u64,
    pub h_n: u64,
    pub omega_n: u64,
    pub rx: u64,
    pub mem_tx: u64,
    pub mem_a_ce: u64,
    pub mem_tensors: u64,
    pub mem_h_n: u64,
}

fn log2(x: u64) -> u64 {
    debug_assert!(x.is_power_of_two());
    x.trailing_zeros() as u64
}

pub fn complexity(n: &Numerology) -> ComplexityReport {
    let (m, nn, q, mp) = (n.m as u64, n.n as u64, n.q as u64, n.m_prime as u64);
    let (mh, mb, ms) = (n.m_h as u64, n.m_b as u64, n.m_s as u64);
    let mce = match n.variant {
        Variant::Cp => n.m_ce as u64,
        Variant::Uw => mh,
    };
    let c_sft = nn * m / 2 * log2(m * nn);
    let c_fft = mp / 2 * log2(mp);
    let omega_ce = mh * mce * mce * nn.pow(3) + (2 * mce * mce * nn * nn + mce * nn) / 4;
    let h_ce = mh * mh * nn * nn;
    let omega_n = nn * (mb * m * (m + 1) / 2 + m.pow(3) / 6 + m * m * mb + m * mb);
    let detect = mb * m * nn + c_sft;
    let (tx, h_n, rx_extra, mem_tx, mem_tensors) = match n.variant {
        Variant::Cp => (
            c_sft + m * q * nn / 2 + nn * c_fft,
            m * nn * ((mh + mb) * q + mb * nn),
            nn * c_fft + (mp * nn / 2 + c_sft) + detect,
            m * nn + m * q,
            mb * m * nn * q + mh * m * q + nn * nn,
        ),
        Variant::Uw => (
            c_sft + ms * m * nn + nn * c_fft,
            mb * nn * (mh + 2 * m * nn),
            nn * c_fft + detect,
            m * nn + ms * m + mp * nn,
            mb * m * nn + mb * mh * nn + nn * nn,
        ),
    };
    ComplexityReport {
        tx,
        omega_ce,
        h_ce,
        h_n,
        omega_n,
        rx: omega_ce + h_ce + h_n + omega_n + rx_extra,
        mem_tx,
        mem_a_ce: mh * mce * nn * nn,
        mem_tensors,
        mem_h_n: mb * m,
    }
}

fn table(title: &str, labels: &[&str], cols: &[(String, Vec<u64>)]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{title}\n{:<16}", "");
    for (name, _) in cols {
        let _ = write!(out, "{name:>12}");
    }
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        let _ = write!(out, "{l:<16}");
        for (_, v) in cols {
            let _ = write!(out, "{:>12}", v[i]);
        }
        out.push('\n');
    }
    out
}

/// Multiplication and memory tables for labelled systems.
pub fn complexity_report(systems: &[(String, ComplexityReport)]) -> String {
    let cm = systems
        .iter()
        .map(|(l, r)| (l.clone(), vec![r.tx, r.omega_ce, r.h_ce, r.h_n, r.omega_n, r.rx]))
        .collect::<Vec<_>>();
    let mem = systems
        .iter()
        .map(|(l, r)| (l.clone(), vec![r.mem_tx, r.mem_a_ce, r.mem_tensors, r.mem_h_n]))
        .collect::<Vec<_>>();
    let mut out = table(
        "complex multiplications",
        &["Tx side", "Omega_ce", "H_ce", "H_n (all N)", "Omega_n (all N)", "Rx side"],
        &cm,
    );
    out.push('\n');
    out.push_str(&table(
        "memory [complex samples]",
        &["Tx side", "A_ce, Omega_ce", "Tensors", "H_n, Omega_n"],
        &mem,
    ));
    out
}
