//! UW-OTFS: a null-space precoder forces the last M_gi samples of every
//! delay block to zero; a unique-word pilot occupies that guard interval and
//! the channel is estimated from its tail in the time domain.

use std::f64::consts::PI;

use crate::channel::ChannelRealization;
use crate::detection::{assemble_dd, bin_indices, lmmse_detect, EcmSet};
use crate::estimation::CeOperator;
use crate::modem::{Csi, RxOutput, TxSignal};
use crate::numerics::{dft_in_place, exp_sum, isft, null_space_basis, ComplexMatrix};
use crate::numerology::{BemConfig, Numerology, PilotConfig, PilotKind, Variant};
use crate::{Error, Result, C64};

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UwPrecoder {
    /// M_s × M precoding matrix with orthonormal columns.
    pub g: ComplexMatrix,
    /// Active subcarrier indices on the M'-point grid.
    pub active: Vec<usize>,
    pub alpha_d: f64,
}

/// Active subcarriers: the lowest-|frequency| M_s bins.
pub fn active_subcarriers(m_s: usize, m_prime: usize) -> Result<Vec<usize>> {
    if m_s.is_multiple_of(2) {
        return Err(Error::Config(format!("M_s = {m_s} must be odd")));
    }
    bin_indices(m_prime, m_s)
}

pub fn build_precoder(n: &Numerology, sigma_u_sq: f64) -> Result<UwPrecoder> {
    if n.variant != Variant::Uw {
        return Err(Error::Config("precoder needs a UW numerology".into()));
    }
    let mp = n.m_prime;
    let active = active_subcarriers(n.m_s, mp)?;
    // GI rows of F*_{M'} B
    let t = ComplexMatrix::from_fn(n.m_gi, n.m_s, |r, l| {
        let k = mp - n.m_gi + r;
        C64::from_polar(1.0 / (mp as f64).sqrt(), 2.0 * PI * ((k * active[l]) % mp) as f64 / mp as f64)
    });
    let g = null_space_basis(&t)?;
    if g.cols() != n.m {
        return Err(Error::Construction(format!(
            "GI map has a {}-dimensional null space, expected M = {}",
            g.cols(),
            n.m
        )));
    }
    let trace = g.norm_sqr();
    let alpha_d = (mp as f64 * (1.0 - sigma_u_sq) / trace).sqrt();
    Ok(UwPrecoder { g, active, alpha_d })
}

/// Data part of the frame, M'×N.
pub fn tx_data_frame(d: &ComplexMatrix, pre: &UwPrecoder, n: &Numerology) -> Result<ComplexMatrix> {
    if d.shape() != (n.m, n.n) {
        return Err(Error::SizeMismatch(format!("DD frame is {:?}, expected {}x{}", d.shape(), n.m, n.n)));
    }
    let xc = pre.g.matmul(&isft(d))?;
    let mut s = ComplexMatrix::zeros(n.m_prime, n.n);
    let mut buf = vec![zero(); n.m_prime];
    for c in 0..n.n {
        buf.iter_mut().for_each(|b| *b = zero());
        for (l, &k) in pre.active.iter().enumerate() {
            buf[k] = xc[(l, c)] * pre.alpha_d;
        }
        dft_in_place(&mut buf, true);
        s.set_column(c, &buf);
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UwPilotKind {
    Dirac,
    ChirpedDirichlet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UwPilot {
    /// Unit mean energy sequence over the whole frame (M'N samples).
    pub c: Vec<C64>,
    pub kind: UwPilotKind,
    pub sigma_u_sq: f64,
}

/// One period of the unchirped Dirichlet pilot, unit mean energy, peaked at
/// `k_h`.
pub fn dirichlet_pilot_period(n: &Numerology) -> Result<Vec<C64>> {
    let mp = n.m_prime;
    let active = active_subcarriers(n.m_s, mp)?;
    let norm = 1.0 / (n.m_s as f64).sqrt();
    Ok((0..mp)
        .map(|p| {
            active
                .iter()
                .map(|&k| C64::from_polar(norm, 2.0 * PI * ((k * (p + n.m_h)) % mp) as f64 / mp as f64))
                .sum()
        })
        .collect())
}

pub fn uw_pilot(n: &Numerology, kind: UwPilotKind, sigma_u_sq: f64) -> Result<UwPilot> {
    if n.variant != Variant::Uw || n.m_gi.is_multiple_of(2) {
        return Err(Error::Config("UW pilot needs a UW numerology with odd M_gi".into()));
    }
    let (mp, len) = (n.m_prime, n.m_prime * n.n);
    let c = match kind {
        UwPilotKind::Dirac => (0..len)
            .map(|k| if k % mp == n.k_h { C64::new((mp as f64).sqrt(), 0.0) } else { zero() })
            .collect(),
        UwPilotKind::ChirpedDirichlet => {
            let c0 = dirichlet_pilot_period(n)?;
            (0..len)
                .map(|p| {
                    let x = p as f64 / mp as f64;
                    c0[p % mp] * C64::from_polar(1.0, -PI * x * (p as f64 / len as f64 - 1.0))
                })
                .collect()
        }
    };
    Ok(UwPilot { c, kind, sigma_u_sq })
}

impl UwPilot {
    pub fn emitted(&self) -> Vec<C64> {
        let s = self.sigma_u_sq.sqrt();
        self.c.iter().map(|x| x * s).collect()
    }
}

/// Share of one pilot period's energy that falls on the GI samples.
pub fn gi_energy_fraction(period: &[C64], m_gi: usize) -> f64 {
    let total: f64 = period.iter().map(|x| x.norm_sqr()).sum();
    let gi: f64 = period[period.len() - m_gi..].iter().map(|x| x.norm_sqr()).sum();
    gi / total
}

/// The last M_h samples of every received block.
pub fn extract_ce(r: &[C64], n: &Numerology) -> Result<ComplexMatrix> {
    if r.len() < n.m_prime * n.n {
        return Err(Error::OutOfBounds(format!("{} samples, need {}", r.len(), n.m_prime * n.n)));
    }
    Ok(ComplexMatrix::from_fn(n.m_h, n.n, |m, b| r[m + n.m_prime * b + n.k_h]))
}

pub fn build_uw_ce_operator(n: &Numerology, pilot: &UwPilot, bem: &BemConfig) -> Result<CeOperator> {
    let (mp, mh, nn) = (n.m_prime, n.m_h, n.n);
    let su = pilot.sigma_u_sq.sqrt();
    let a = ComplexMatrix::from_fn(mh * nn, mh * nn, |p, q| {
        let (m, b) = (p % mh, p / mh);
        let (kt, kn) = (q % mh, q / mh);
        let v = bem.grid[kn];
        let k = (m + mp * b + n.k_h) as f64;
        let idx = (m + 2 * mp - kt - mh) % mp + b * mp;
        pilot.c[idx] * C64::from_polar(su, 2.0 * PI * v * k / (bem.n_nu * nn as f64 * mp as f64))
    });
    CeOperator::new(a, mh, nn)
}

/// `Σ_{k<M'-M_gi} e^{j2πk(M_s[l] - p + ξ)/M'}` for every active l.
fn window_sums(pre: &UwPrecoder, n: &Numerology, p: usize, xi: f64) -> Vec<C64> {
    let len = n.m_prime - n.m_gi;
    pre.active.iter().map(|&k| exp_sum(k as f64 - p as f64 + xi, len, n.m_prime)).collect()
}

/// Ideal ECMs restricted to a row set.
pub struct UwPerfectEcm {
    per_path: Vec<ComplexMatrix>,
    gains: Vec<C64>,
    dopplers: Vec<f64>,
    g: ComplexMatrix,
}

impl UwPerfectEcm {
    pub fn new(ch: &ChannelRealization, pre: &UwPrecoder, n: &Numerology, rows: &[usize]) -> Self {
        let mp = n.m_prime as f64;
        let per_path = ch
            .delays
            .iter()
            .zip(&ch.dopplers)
            .map(|(&kt, &xi)| {
                let mut k = ComplexMatrix::zeros(rows.len(), pre.active.len());
                for (ri, &p) in rows.iter().enumerate() {
                    let ph = C64::from_polar(
                        pre.alpha_d / mp,
                        -2.0 * PI * ((p * kt) % n.m_prime) as f64 / mp + 2.0 * PI * xi * kt as f64 / mp,
                    );
                    for (l, s) in window_sums(pre, n, p, xi).into_iter().enumerate() {
                        k[(ri, l)] = ph * s;
                    }
                }
                k
            })
            .collect();
        Self { per_path, gains: ch.gains.clone(), dopplers: ch.dopplers.clone(), g: pre.g.clone() }
    }

    pub fn block(&self, b: usize) -> ComplexMatrix {
        let (r, c) = self.per_path[0].shape();
        let mut acc = ComplexMatrix::zeros(r, c);
        for ((k, g), xi) in self.per_path.iter().zip(&self.gains).zip(&self.dopplers) {
            let coef = g * C64::from_polar(1.0, 2.0 * PI * xi * b as f64);
            for (o, v) in acc.as_mut_slice().iter_mut().zip(k.as_slice()) {
                *o += coef * v;
            }
        }
        acc.matmul(&self.g).expect("shapes agree by construction")
    }
}

pub fn perfect_ecm_uw(ch: &ChannelRealization, pre: &UwPrecoder, n: &Numerology, b: usize) -> ComplexMatrix {
    let rows: Vec<usize> = (0..n.m_prime).collect();
    UwPerfectEcm::new(ch, pre, n, &rows).block(b)
}

/// Offline tensors for rebuilding ECMs from BEM coefficients.
pub struct UwEcmReconstructor {
    /// `[r][q][kν]`
    g: Vec<C64>,
    /// `[r][kτ][kν]`
    mbar: Vec<C64>,
    /// `[n][kν]`
    doppler: Vec<C64>,
    rows: usize,
    m: usize,
    n: usize,
    m_h: usize,
}

impl UwEcmReconstructor {
    pub fn new(n: &Numerology, pre: &UwPrecoder, bem: &BemConfig, rows: &[usize]) -> Self {
        let (mp, nn, mh, m) = (n.m_prime, n.n, n.m_h, n.m);
        let mut g = vec![zero(); rows.len() * m * nn];
        let mut mbar = vec![zero(); rows.len() * mh * nn];
        for (kn, &v) in bem.grid.iter().enumerate() {
            let xi = v / (bem.n_nu * nn as f64);
            for (ri, &p) in rows.iter().enumerate() {
                let s = window_sums(pre, n, p, xi);
                for q in 0..m {
                    let acc: C64 = s.iter().enumerate().map(|(l, x)| pre.g[(l, q)] * x).sum();
                    g[(ri * m + q) * nn + kn] = acc * (pre.alpha_d / mp as f64);
                }
                for kt in 0..mh {
                    let ph = -2.0 * PI * ((p * kt) % mp) as f64 / mp as f64 + 2.0 * PI * xi * kt as f64 / mp as f64;
                    mbar[(ri * mh + kt) * nn + kn] = C64::from_polar(1.0, ph);
                }
            }
        }
        let doppler = (0..nn)
            .flat_map(|b| {
                bem.grid
                    .iter()
                    .map(move |&v| C64::from_polar(1.0, 2.0 * PI * v * b as f64 / (bem.n_nu * nn as f64)))
            })
            .collect();
        Self { g, mbar, doppler, rows: rows.len(), m, n: nn, m_h: mh }
    }

    pub fn reconstruct(&self, h_ce: &ComplexMatrix) -> Result<EcmSet> {
        let (nn, mh, m) = (self.n, self.m_h, self.m);
        if h_ce.shape() != (mh, nn) {
            return Err(Error::SizeMismatch(format!("BEM matrix {:?}, expected {mh}x{nn}", h_ce.shape())));
        }
        let mut mm = vec![zero(); self.rows * nn];
        for r in 0..self.rows {
            for kn in 0..nn {
                mm[r * nn + kn] = (0..mh).map(|kt| self.mbar[(r * mh + kt) * nn + kn] * h_ce[(kt, kn)]).sum();
            }
        }
        let blocks = (0..nn)
            .map(|b| {
                let nrow = &self.doppler[b * nn..(b + 1) * nn];
                ComplexMatrix::from_fn(self.rows, m, |r, q| {
                    let base = (r * m + q) * nn;
                    (0..nn).map(|kn| self.g[base + kn] * nrow[kn] * mm[r * nn + kn]).sum()
                })
            })
            .collect();
        EcmSet::new(blocks)
    }
}

pub fn reconstruct_ecm_uw(
    h_ce: &ComplexMatrix,
    pre: &UwPrecoder,
    n: &Numerology,
    bem: &BemConfig,
    b: usize,
) -> Result<ComplexMatrix> {
    let rows = bin_indices(n.m_prime, n.m_b)?;
    Ok(UwEcmReconstructor::new(n, pre, bem, &rows).reconstruct(h_ce)?.blocks[b].clone())
}

pub fn column_stream(s: &ComplexMatrix) -> Vec<C64> {
    (0..s.cols()).flat_map(|c| s.column(c)).collect()
}

/// A configured UW-OTFS link with all offline operators built.
pub struct UwSystem {
    pub num: Numerology,
    pub precoder: UwPrecoder,
    pub pilot: Option<UwPilot>,
    pub bem: BemConfig,
    pub rows: Vec<usize>,
    ce: Option<(CeOperator, UwEcmReconstructor)>,
}

impl UwSystem {
    pub fn new(num: Numerology, pc: PilotConfig, bem: BemConfig) -> Result<Self> {
        let kind = match pc.kind {
            PilotKind::DiracUw => Some(UwPilotKind::Dirac),
            PilotKind::ChirpedDirichletUw => Some(UwPilotKind::ChirpedDirichlet),
            PilotKind::None => None,
            k => return Err(Error::Config(format!("pilot {k:?} is not a UW pilot"))),
        };
        let precoder = build_precoder(&num, pc.sigma_u_sq)?;
        let rows = bin_indices(num.m_prime, num.m_b)?;
        let pilot = kind.map(|k| uw_pilot(&num, k, pc.sigma_u_sq)).transpose()?;
        let ce = match &pilot {
            Some(p) => Some((
                build_uw_ce_operator(&num, p, &bem)?,
                UwEcmReconstructor::new(&num, &precoder, &bem, &rows),
            )),
            None => None,
        };
        Ok(Self { num, precoder, pilot, bem, rows, ce })
    }

    pub fn ce_operator(&self) -> Option<&CeOperator> {
        self.ce.as_ref().map(|(op, _)| op)
    }

    pub fn reconstructor(&self) -> Option<&UwEcmReconstructor> {
        self.ce.as_ref().map(|(_, r)| r)
    }

    /// Data symbols fill the DD grid column by column.
    pub fn dd_frame(&self, data: &[C64]) -> Result<ComplexMatrix> {
        let (m, n) = (self.num.m, self.num.n);
        if data.len() != m * n {
            return Err(Error::SizeMismatch(format!("{} data symbols for {} bins", data.len(), m * n)));
        }
        Ok(ComplexMatrix::from_fn(m, n, |r, c| data[r + m * c]))
    }

    pub fn transmit(&self, data: &[C64]) -> Result<TxSignal> {
        let s = tx_data_frame(&self.dd_frame(data)?, &self.precoder, &self.num)?;
        let mut samples = column_stream(&s);
        if let Some(p) = &self.pilot {
            for (x, u) in samples.iter_mut().zip(p.emitted()) {
                *x += u;
            }
        }
        Ok(TxSignal { samples, origin: 0 })
    }

    pub fn pilot_signal(&self) -> Option<TxSignal> {
        self.pilot.as_ref().map(|p| TxSignal { samples: p.emitted(), origin: 0 })
    }

    pub fn perfect_ecms(&self, ch: &ChannelRealization) -> Result<EcmSet> {
        let p = UwPerfectEcm::new(ch, &self.precoder, &self.num, &self.rows);
        EcmSet::new((0..self.num.n).map(|b| p.block(b)).collect())
    }

    pub fn estimate(&self, r: &[C64], sigma_w_sq: f64) -> Result<ComplexMatrix> {
        let (op, _) = self.ce.as_ref().ok_or_else(|| Error::Config("no pilot configured".into()))?;
        op.estimate(&extract_ce(r, &self.num)?, sigma_w_sq)
    }

    /// Per-block unitary DFT of the received stream, M'×N.
    pub fn wigner(&self, r: &[C64]) -> Result<ComplexMatrix> {
        let (mp, nn) = (self.num.m_prime, self.num.n);
        if r.len() < mp * nn {
            return Err(Error::OutOfBounds(format!("{} samples, need {}", r.len(), mp * nn)));
        }
        let mut y = ComplexMatrix::zeros(mp, nn);
        for c in 0..nn {
            let mut buf = r[c * mp..(c + 1) * mp].to_vec();
            dft_in_place(&mut buf, false);
            y.set_column(c, &buf);
        }
        Ok(y)
    }

    pub fn receive(&self, r: &[C64], sigma_w_sq: f64, csi: Csi<'_>, cancel: Option<&[C64]>) -> Result<RxOutput> {
        let (ecm, h_ce) = match csi {
            Csi::Perfect(ch) => (self.perfect_ecms(ch)?, None),
            Csi::Estimated => {
                let (_, rec) = self.ce.as_ref().ok_or_else(|| Error::Config("estimated CSI needs a pilot".into()))?;
                let h = self.estimate(r, sigma_w_sq)?;
                (rec.reconstruct(&h)?, Some(h))
            }
        };
        let y = match cancel {
            Some(c) => self.wigner(&r.iter().zip(c).map(|(a, b)| a - b).collect::<Vec<_>>())?,
            None => self.wigner(r)?,
        };
        let reduced = y.select_rows(&self.rows);
        let mut blocks = Vec::with_capacity(self.num.n);
        for (b, h) in ecm.blocks.iter().enumerate() {
            blocks.push(lmmse_detect(&reduced.column(b), h, sigma_w_sq)?);
        }
        Ok(RxOutput { d: assemble_dd(&blocks)?, h_ce, ecm })
    }
}
