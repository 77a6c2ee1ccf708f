//! CP-OTFS: circular RRC pulse shaping on an M'-point oversampled grid, a
//! cyclic prefix per delay block, and an embedded impulse pilot estimated in
//! the DD domain through a GCE-BEM.
//!
//! Time convention: the post-CP samples of block n sit at absolute index
//! `n·M_x' + t`, `t ∈ [0, M')`, so the stream starts at `-M_cp`.

use std::f64::consts::PI;

use crate::channel::ChannelRealization;
use crate::detection::{bin_indices, lmmse_detect, EcmSet};
use crate::estimation::CeOperator;
use crate::modem::{Csi, RxOutput, TxSignal};
use crate::numerics::{dft_in_place, dirichlet_kernel, isft, sft, ComplexMatrix};
use crate::numerology::{BemConfig, Numerology, PilotConfig, PilotKind, Variant};
use crate::{Error, Result, C64};

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RrcSpectrum {
    psi: Vec<f64>,
    m: usize,
    m_alpha: usize,
}

/// Frequency response of the circular RRC filter on M·Q bins. The
/// transition is `½·sqrt(2 + 2cos(π(p+M_α)/(2M_α)))` so it starts at 1 and
/// the aliased power is exactly one.
pub fn rrc_spectrum(m: usize, q: usize, alpha: f64) -> Result<RrcSpectrum> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("roll-off {alpha} outside [0, 1]")));
    }
    if !m.is_multiple_of(2) || q == 0 {
        return Err(Error::InvalidDimension(format!("M = {m} must be even and Q = {q} positive")));
    }
    let m_alpha = (alpha * m as f64 / 2.0).floor() as usize;
    if alpha > 0.0 && m_alpha == 0 {
        return Err(Error::Config(format!("roll-off {alpha} gives no excess bins for M = {m}")));
    }
    let mp = m * q;
    if m + 2 * m_alpha > mp {
        return Err(Error::Config(format!("M + 2M_alpha = {} exceeds M' = {mp}", m + 2 * m_alpha)));
    }
    let ma = m_alpha as f64;
    let phi = |p: f64| 0.5 * (2.0 + 2.0 * (PI * (p + ma) / (2.0 * ma)).cos()).max(0.0).sqrt();
    let mut psi = vec![0.0; mp];
    let (h, ma_i) = (m / 2, m_alpha);
    for p in 0..h - ma_i {
        psi[p] = 1.0;
    }
    for p in mp - h + ma_i..mp {
        psi[p] = 1.0;
    }
    for p in h - ma_i..h + ma_i {
        psi[p] = phi(p as f64 - h as f64);
    }
    for p in mp - h - ma_i..mp - h + ma_i {
        psi[p] = phi((mp - h) as f64 - p as f64);
    }
    Ok(RrcSpectrum { psi, m, m_alpha })
}

impl RrcSpectrum {
    pub fn values(&self) -> &[f64] {
        &self.psi
    }

    pub fn m_alpha(&self) -> usize {
        self.m_alpha
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// The M + 2M_α bins assigned by the filter definition. One transition
    /// bin has zero gain, so the strictly nonzero count is one less when
    /// M_α ≥ 1.
    pub fn support(&self) -> Vec<usize> {
        let mp = self.psi.len();
        let (h, a) = (self.m / 2, self.m_alpha);
        (0..h + a).chain(mp - h - a..mp).collect()
    }

    pub fn aliased_power(&self, m: usize) -> f64 {
        (0..self.psi.len() / self.m).map(|k| self.psi[m + k * self.m].powi(2)).sum()
    }
}

pub fn rrc_for(n: &Numerology) -> Result<RrcSpectrum> {
    rrc_spectrum(n.m, n.q, n.alpha)
}

/// Row-major indicator of the DD data bins: every row below the pilot guard.
pub fn data_mask(n: &Numerology) -> Vec<bool> {
    (0..n.m * n.n).map(|i| i / n.n >= n.m_g).collect()
}

/// Places the pilot and the data symbols (column-major over the data bins).
/// A `None` pilot keeps the guard region empty.
pub fn embed_pilot(data: &[C64], pc: &PilotConfig, n: &Numerology) -> Result<ComplexMatrix> {
    let mask = data_mask(n);
    let count = mask.iter().filter(|&&b| b).count();
    if data.len() != count {
        return Err(Error::SizeMismatch(format!("{} data symbols for {count} data bins", data.len())));
    }
    let mut d = ComplexMatrix::zeros(n.m, n.n);
    let mut it = data.iter();
    for c in 0..n.n {
        for r in 0..n.m {
            if mask[r * n.n + c] {
                d[(r, c)] = *it.next().expect("count checked");
            }
        }
    }
    match pc.kind {
        PilotKind::EmbeddedImpulse => {
            d[(pc.p0, pc.q0)] = C64::new((pc.rho0_sq * pc.m0 as f64).sqrt(), 0.0);
        }
        PilotKind::None => {}
        k => return Err(Error::Config(format!("pilot {k:?} cannot be embedded in CP-OTFS"))),
    }
    Ok(d)
}

/// One column per delay block, CP rows first.
#[derive(Clone, Debug, PartialEq)]
pub struct CpFrame {
    pub samples: ComplexMatrix,
    pub m_cp: usize,
}

impl CpFrame {
    pub fn stream(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.samples.rows() * self.samples.cols());
        for c in 0..self.samples.cols() {
            out.extend(self.samples.column(c));
        }
        out
    }

    pub fn origin(&self) -> i64 {
        -(self.m_cp as i64)
    }

    pub fn signal(&self) -> TxSignal {
        TxSignal { samples: self.stream(), origin: self.origin() }
    }
}

pub fn tx_frame(d: &ComplexMatrix, psi: &RrcSpectrum, n: &Numerology) -> Result<CpFrame> {
    if d.shape() != (n.m, n.n) {
        return Err(Error::SizeMismatch(format!("DD frame is {:?}, expected {}x{}", d.shape(), n.m, n.n)));
    }
    tx_ft_frame(&isft(d), psi, n)
}

/// Tx from an FT-domain matrix X (M×N). Each block is the M'-point IDFT of
/// the shaped, cyclically extended column, scaled so a sample carries the
/// window 1/√M rather than 1/√M'.
pub fn tx_ft_frame(x: &ComplexMatrix, psi: &RrcSpectrum, n: &Numerology) -> Result<CpFrame> {
    let (mp, mcp) = (n.m_prime, n.m_cp);
    if x.shape() != (n.m, n.n) || psi.len() != mp {
        return Err(Error::SizeMismatch("FT frame or filter does not match numerology".into()));
    }
    let gain = (n.q as f64).sqrt();
    let mut s = ComplexMatrix::zeros(n.m_x_prime, n.n);
    let mut buf = vec![zero(); mp];
    for c in 0..n.n {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = x[(j % n.m, c)] * psi.psi[j];
        }
        dft_in_place(&mut buf, true);
        for t in 0..mp {
            s[(mcp + t, c)] = buf[t] * gain;
        }
        for t in 0..mcp {
            s[(t, c)] = buf[mp - mcp + t] * gain;
        }
    }
    Ok(CpFrame { samples: s, m_cp: mcp })
}

/// Per-block unitary DFT of the M' post-CP samples. `r` starts at the first
/// CP sample of block 0.
pub fn wigner_rx(r: &[C64], n: &Numerology) -> Result<ComplexMatrix> {
    let (mp, mx) = (n.m_prime, n.m_x_prime);
    if r.len() < mx * n.n {
        return Err(Error::OutOfBounds(format!("{} samples, need {}", r.len(), mx * n.n)));
    }
    let mut y = ComplexMatrix::zeros(mp, n.n);
    for c in 0..n.n {
        let start = c * mx + n.m_cp;
        let mut buf = r[start..start + mp].to_vec();
        dft_in_place(&mut buf, false);
        y.set_column(c, &buf);
    }
    Ok(y)
}

/// Ideal per-block ECMs of a channel, restricted to a chosen row set.
pub struct CpPerfectEcm {
    per_path: Vec<ComplexMatrix>,
    gains: Vec<C64>,
    dopplers: Vec<f64>,
    block_phase: f64,
}

impl CpPerfectEcm {
    pub fn new(ch: &ChannelRealization, psi: &RrcSpectrum, n: &Numerology, rows: &[usize]) -> Self {
        let mp = n.m_prime;
        let sq = (n.q as f64).sqrt();
        let support: Vec<usize> = (0..mp).filter(|&j| psi.psi[j] != 0.0).collect();
        let per_path = ch
            .delays
            .iter()
            .zip(&ch.dopplers)
            .map(|(&kt, &xi)| {
                // kernel values for every integer offset j - m in (-M', M')
                let chi: Vec<C64> =
                    (0..2 * mp - 1).map(|d| dirichlet_kernel(d as f64 - (mp - 1) as f64 + xi, mp)).collect();
                let w: Vec<C64> = (0..mp)
                    .map(|j| C64::from_polar(sq * psi.psi[j], -2.0 * PI * ((kt * j) % mp) as f64 / mp as f64))
                    .collect();
                let mut k = ComplexMatrix::zeros(rows.len(), n.m);
                for (ri, &m) in rows.iter().enumerate() {
                    for &j in &support {
                        k[(ri, j % n.m)] += w[j] * chi[j + mp - 1 - m];
                    }
                }
                k
            })
            .collect();
        Self {
            per_path,
            gains: ch.gains.clone(),
            dopplers: ch.dopplers.clone(),
            block_phase: 2.0 * PI * n.m_x_prime as f64 / mp as f64,
        }
    }

    pub fn block(&self, b: usize) -> ComplexMatrix {
        let (r, c) = self.per_path[0].shape();
        let mut h = ComplexMatrix::zeros(r, c);
        for ((k, g), xi) in self.per_path.iter().zip(&self.gains).zip(&self.dopplers) {
            let coef = g * C64::from_polar(1.0, self.block_phase * xi * b as f64);
            for (o, v) in h.as_mut_slice().iter_mut().zip(k.as_slice()) {
                *o += coef * v;
            }
        }
        h
    }
}

/// Full M'×M ECM of block `b`.
pub fn perfect_ecm(ch: &ChannelRealization, psi: &RrcSpectrum, n: &Numerology, b: usize) -> ComplexMatrix {
    let rows: Vec<usize> = (0..n.m_prime).collect();
    CpPerfectEcm::new(ch, psi, n, &rows).block(b)
}

/// Matched filtering followed by aliasing back to M bins.
pub fn rx_filter_alias(y: &ComplexMatrix, psi: &RrcSpectrum) -> Result<ComplexMatrix> {
    let mp = psi.len();
    if y.rows() != mp {
        return Err(Error::SizeMismatch(format!("{} rows, filter has {mp} bins", y.rows())));
    }
    let m = psi.m;
    Ok(ComplexMatrix::from_fn(m, y.cols(), |p, c| {
        (0..mp / m).map(|k| y[(p + k * m, c)] * psi.psi[p + k * m]).sum()
    }))
}

pub fn extract_ce_region(d_hat: &ComplexMatrix, n: &Numerology) -> Result<ComplexMatrix> {
    if n.m_ce_offset + n.m_ce > d_hat.rows() {
        return Err(Error::OutOfBounds(format!(
            "rows {}..{} outside a {}-row frame",
            n.m_ce_offset,
            n.m_ce_offset + n.m_ce,
            d_hat.rows()
        )));
    }
    Ok(ComplexMatrix::from_fn(n.m_ce, d_hat.cols(), |r, c| d_hat[(r + n.m_ce_offset, c)]))
}

/// Response of the extracted CE region to every unit BEM coefficient, for a
/// frame holding only the pilot.
pub fn build_cp_ce_operator(n: &Numerology, pc: &PilotConfig, bem: &BemConfig) -> Result<CeOperator> {
    if pc.kind != PilotKind::EmbeddedImpulse {
        return Err(Error::Config("CP-OTFS channel estimation needs the embedded pilot".into()));
    }
    let psi = rrc_for(n)?;
    let (m, mp, nn, mh) = (n.m, n.m_prime, n.n, n.m_h);
    let x0 = (pc.rho0_sq * pc.m0 as f64).sqrt();
    let support: Vec<usize> = (0..mp).filter(|&j| psi.psi[j] != 0.0).collect();
    let lead = x0 * (n.q as f64).sqrt() / m as f64;
    let mut a = ComplexMatrix::zeros(n.m_ce * nn, mh * nn);

    for (kn, &v) in bem.grid.iter().enumerate() {
        let xi = v * mp as f64 / (bem.n_nu * nn as f64 * n.m_x_prime as f64);
        let chi: Vec<C64> = (0..2 * mp - 1).map(|d| dirichlet_kernel(d as f64 - (mp - 1) as f64 + xi, mp)).collect();
        let doppler: Vec<C64> =
            (0..nn).map(|q| dirichlet_kernel(pc.q0 as f64 - q as f64 + v / bem.n_nu, nn)).collect();
        for kt in 0..mh {
            // pilot spectrum after shaping and the delay phase of tap kt
            let u: Vec<C64> = (0..mp)
                .map(|j| {
                    let ph = ((j % m) * pc.p0 % m) as f64 / m as f64 + ((kt * j) % mp) as f64 / mp as f64;
                    C64::from_polar(psi.psi[j], -2.0 * PI * ph)
                })
                .collect();
            let mut w = vec![zero(); m];
            for &i in &support {
                let t: C64 = support.iter().map(|&j| u[j] * chi[j + mp - 1 - i]).sum();
                w[i % m] += t * psi.psi[i];
            }
            for mr in 0..n.m_ce {
                let row = mr + n.m_ce_offset;
                let b: C64 = (0..m)
                    .map(|l| w[l] * C64::from_polar(1.0, 2.0 * PI * ((row * l) % m) as f64 / m as f64))
                    .sum();
                for q in 0..nn {
                    a[(mr + n.m_ce * q, kt + mh * kn)] = b * doppler[q] * lead;
                }
            }
        }
    }
    CeOperator::new(a, mh, nn)
}

/// Offline tensors for rebuilding ECMs from BEM coefficients.
pub struct CpEcmReconstructor {
    /// `g[r][m'][kν][k]`, flattened.
    g: Vec<C64>,
    m: usize,
    q: usize,
    n: usize,
    m_h: usize,
    rows: usize,
    /// `e^{-j2π(m'+kM)kτ/(QM)}` as `[m'][kτ][k]`.
    delay: Vec<C64>,
    /// `e^{j2π V n /(n_ν N)}` as `[n][kν]`.
    doppler: Vec<C64>,
}

impl CpEcmReconstructor {
    pub fn new(n: &Numerology, psi: &RrcSpectrum, bem: &BemConfig, rows: &[usize]) -> Self {
        let (m, q, mp, nn, mh) = (n.m, n.q, n.m_prime, n.n, n.m_h);
        let sq = (q as f64).sqrt();
        let mut g = vec![zero(); rows.len() * m * nn * q];
        for (kn, &v) in bem.grid.iter().enumerate() {
            let xi = v * mp as f64 / (bem.n_nu * nn as f64 * n.m_x_prime as f64);
            for (ri, &row) in rows.iter().enumerate() {
                for mq in 0..m {
                    for k in 0..q {
                        let j = mq + k * m;
                        if psi.psi[j] == 0.0 {
                            continue;
                        }
                        let val = dirichlet_kernel(j as f64 - row as f64 + xi, mp) * (sq * psi.psi[j]);
                        g[((ri * m + mq) * nn + kn) * q + k] = val;
                    }
                }
            }
        }
        let mut delay = vec![zero(); m * mh * q];
        for mq in 0..m {
            for kt in 0..mh {
                for k in 0..q {
                    let j = mq + k * m;
                    delay[(mq * mh + kt) * q + k] =
                        C64::from_polar(1.0, -2.0 * PI * ((j * kt) % mp) as f64 / mp as f64);
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
        Self { g, m, q, n: nn, m_h: mh, rows: rows.len(), delay, doppler }
    }

    pub fn reconstruct(&self, h_ce: &ComplexMatrix) -> Result<EcmSet> {
        let (m, q, nn, mh) = (self.m, self.q, self.n, self.m_h);
        if h_ce.shape() != (mh, nn) {
            return Err(Error::SizeMismatch(format!("BEM matrix {:?}, expected {mh}x{nn}", h_ce.shape())));
        }
        // mbar[m'][kν][k] = Σ_kτ H[kτ,kν] e^{-j2π(m'+kM)kτ/M'}
        let mut mbar = vec![zero(); m * nn * q];
        for mq in 0..m {
            for kn in 0..nn {
                for k in 0..q {
                    mbar[(mq * nn + kn) * q + k] =
                        (0..mh).map(|kt| h_ce[(kt, kn)] * self.delay[(mq * mh + kt) * q + k]).sum();
                }
            }
        }
        // per (r, m', kν): Σ_k g·mbar, shared by all blocks
        let mut inner = vec![zero(); self.rows * m * nn];
        for r in 0..self.rows {
            for mq in 0..m {
                for kn in 0..nn {
                    let gi = ((r * m + mq) * nn + kn) * q;
                    let mi = (mq * nn + kn) * q;
                    inner[(r * m + mq) * nn + kn] = (0..q).map(|k| self.g[gi + k] * mbar[mi + k]).sum();
                }
            }
        }
        let blocks = (0..nn)
            .map(|b| {
                let nrow = &self.doppler[b * nn..(b + 1) * nn];
                ComplexMatrix::from_fn(self.rows, m, |r, mq| {
                    let base = (r * m + mq) * nn;
                    inner[base..base + nn].iter().zip(nrow).map(|(x, y)| x * y).sum()
                })
            })
            .collect();
        EcmSet::new(blocks)
    }
}

/// Reconstructed M_b×M ECM of one block.
pub fn reconstruct_ecm_cp(
    h_ce: &ComplexMatrix,
    n: &Numerology,
    bem: &BemConfig,
    b: usize,
) -> Result<ComplexMatrix> {
    let psi = rrc_for(n)?;
    let rows = bin_indices(n.m_prime, n.m_b)?;
    let set = CpEcmReconstructor::new(n, &psi, bem, &rows).reconstruct(h_ce)?;
    Ok(set.blocks[b].clone())
}

/// A configured CP-OTFS link with all offline operators built.
pub struct CpSystem {
    pub num: Numerology,
    pub psi: RrcSpectrum,
    pub pilot: PilotConfig,
    pub bem: BemConfig,
    pub rows: Vec<usize>,
    ce: Option<(CeOperator, CpEcmReconstructor)>,
}

impl CpSystem {
    pub fn new(num: Numerology, pilot: PilotConfig, bem: BemConfig) -> Result<Self> {
        if num.variant != Variant::Cp {
            return Err(Error::Config("CpSystem needs a CP numerology".into()));
        }
        let psi = rrc_for(&num)?;
        let rows = bin_indices(num.m_prime, num.m_b)?;
        let ce = if pilot.kind == PilotKind::EmbeddedImpulse {
            let op = build_cp_ce_operator(&num, &pilot, &bem)?;
            Some((op, CpEcmReconstructor::new(&num, &psi, &bem, &rows)))
        } else {
            None
        };
        Ok(Self { num, psi, pilot, bem, rows, ce })
    }

    pub fn ce_operator(&self) -> Option<&CeOperator> {
        self.ce.as_ref().map(|(op, _)| op)
    }

    pub fn reconstructor(&self) -> Option<&CpEcmReconstructor> {
        self.ce.as_ref().map(|(_, r)| r)
    }

    pub fn data_mask(&self) -> Vec<bool> {
        data_mask(&self.num)
    }

    pub fn frame(&self, data: &[C64]) -> Result<CpFrame> {
        tx_frame(&embed_pilot(data, &self.pilot, &self.num)?, &self.psi, &self.num)
    }

    pub fn transmit(&self, data: &[C64]) -> Result<TxSignal> {
        Ok(self.frame(data)?.signal())
    }

    pub fn pilot_signal(&self) -> Result<Option<TxSignal>> {
        if self.pilot.kind != PilotKind::EmbeddedImpulse {
            return Ok(None);
        }
        let count = self.data_mask().iter().filter(|&&b| b).count();
        Ok(Some(self.transmit(&vec![zero(); count])?))
    }

    pub fn perfect_ecms(&self, ch: &ChannelRealization) -> Result<EcmSet> {
        let p = CpPerfectEcm::new(ch, &self.psi, &self.num, &self.rows);
        EcmSet::new((0..self.num.n).map(|b| p.block(b)).collect())
    }

    /// Channel estimate from a received stream, if a pilot is configured.
    pub fn estimate(&self, r: &[C64], sigma_w_sq: f64) -> Result<ComplexMatrix> {
        let (op, _) = self.ce.as_ref().ok_or_else(|| Error::Config("no pilot configured".into()))?;
        let y = wigner_rx(r, &self.num)?;
        let d_hat = sft(&rx_filter_alias(&y, &self.psi)?);
        op.estimate(&extract_ce_region(&d_hat, &self.num)?, sigma_w_sq)
    }

    /// Receiver chain. `cancel`, when given, is subtracted from `r` before
    /// data detection (channel estimation always sees `r`).
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
            Some(c) => {
                let rd: Vec<C64> = r.iter().zip(c).map(|(a, b)| a - b).collect();
                wigner_rx(&rd, &self.num)?
            }
            None => wigner_rx(r, &self.num)?,
        };
        let reduced = y.select_rows(&self.rows);
        let mut blocks = Vec::with_capacity(self.num.n);
        for (b, h) in ecm.blocks.iter().enumerate() {
            blocks.push(lmmse_detect(&reduced.column(b), h, sigma_w_sq)?);
        }
        let d = crate::detection::assemble_dd(&blocks)?;
        Ok(RxOutput { d, h_ce, ecm })
    }
}
