//! FT-domain LMMSE detection, bin reduction, QAM mapping and NMSE.

use crate::numerics::{regularized_lmmse, sft, ComplexMatrix};
use crate::{Error, Result, C64};

/// Per-block equivalent channel matrices, each `M_b × M`.
#[derive(Clone, Debug, PartialEq)]
pub struct EcmSet {
    pub blocks: Vec<ComplexMatrix>,
}

impl EcmSet {
    pub fn new(blocks: Vec<ComplexMatrix>) -> Result<Self> {
        let shape = blocks.first().map(ComplexMatrix::shape);
        if shape.is_none() || blocks.iter().any(|b| Some(b.shape()) != shape) {
            return Err(Error::SizeMismatch("ECM blocks must be nonempty and equally sized".into()));
        }
        Ok(Self { blocks })
    }
}

/// The `m_b` lowest-|frequency| bins of an `m_prime`-point DFT, positive
/// frequencies first.
pub fn bin_indices(m_prime: usize, m_b: usize) -> Result<Vec<usize>> {
    if m_b > m_prime || m_b == 0 {
        return Err(Error::OutOfBounds(format!("M_b = {m_b} not in [1, {m_prime}]")));
    }
    let (lo, hi) = if m_b.is_multiple_of(2) { (m_b / 2, m_b / 2) } else { (m_b.div_ceil(2), (m_b - 1) / 2) };
    Ok((0..lo).chain(m_prime - hi..m_prime).collect())
}

pub fn reduce_bins(v: &[C64], m_b: usize) -> Result<Vec<C64>> {
    Ok(bin_indices(v.len(), m_b)?.into_iter().map(|i| v[i]).collect())
}

pub fn lmmse_detect(y: &[C64], h: &ComplexMatrix, sigma_w_sq: f64) -> Result<Vec<C64>> {
    regularized_lmmse(h, sigma_w_sq)?.mul_vec(y)
}

/// `F_M^H [x_0 … x_{N-1}] F_N`.
pub fn assemble_dd(blocks: &[Vec<C64>]) -> Result<ComplexMatrix> {
    Ok(sft(&ComplexMatrix::from_columns(blocks)?))
}

/// Square Gray-coded QAM with unit average energy.
#[derive(Clone, Debug, PartialEq)]
pub struct QamMapping {
    order: usize,
    levels: usize,
    scale: f64,
}

impl QamMapping {
    pub fn new(order: usize) -> Result<Self> {
        if ![4, 16, 64].contains(&order) {
            return Err(Error::Config(format!("QAM order {order} is not 4, 16 or 64")));
        }
        let levels = (order as f64).sqrt().round() as usize;
        let scale = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        Ok(Self { order, levels, scale })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    fn axis_bits(&self) -> usize {
        self.bits_per_symbol() / 2
    }

    fn level(&self, i: usize) -> f64 {
        (2.0 * i as f64 - (self.levels as f64 - 1.0)) * self.scale
    }

    /// Level index whose Gray label is `g`.
    fn level_of_gray(&self, g: usize) -> usize {
        let mut i = g;
        let mut s = g >> 1;
        while s > 0 {
            i ^= s;
            s >>= 1;
        }
        i
    }

    /// Nearest level; exact ties resolve toward the smaller index.
    fn decide(&self, x: f64) -> usize {
        let v = (x / self.scale + (self.levels as f64 - 1.0)) / 2.0;
        ((v - 0.5).ceil().max(0.0) as usize).min(self.levels - 1)
    }

    fn read_axis(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    fn write_axis(&self, idx: usize, out: &mut Vec<u8>) {
        let g = idx ^ (idx >> 1);
        for k in (0..self.axis_bits()).rev() {
            out.push(((g >> k) & 1) as u8);
        }
    }

    /// Bits MSB first: the first half select the in-phase level.
    pub fn map(&self, bits: &[u8]) -> Result<Vec<C64>> {
        let k = self.bits_per_symbol();
        if !bits.len().is_multiple_of(k) {
            return Err(Error::SizeMismatch(format!("{} bits is not a multiple of {k}", bits.len())));
        }
        let h = self.axis_bits();
        Ok(bits
            .chunks(k)
            .map(|c| {
                let i = self.level_of_gray(self.read_axis(&c[..h]));
                let q = self.level_of_gray(self.read_axis(&c[h..]));
                C64::new(self.level(i), self.level(q))
            })
            .collect())
    }

    pub fn demap_symbols(&self, syms: &[C64]) -> Vec<u8> {
        let mut bits = Vec::with_capacity(syms.len() * self.bits_per_symbol());
        for s in syms {
            self.write_axis(self.decide(s.re), &mut bits);
            self.write_axis(self.decide(s.im), &mut bits);
        }
        bits
    }

    pub fn constellation(&self) -> Vec<C64> {
        let mut pts = Vec::with_capacity(self.order);
        for i in 0..self.levels {
            for q in 0..self.levels {
                pts.push(C64::new(self.level(i), self.level(q)));
            }
        }
        pts
    }
}

/// Entries of `m` where `mask` (same shape, row-major) is set, in
/// column-major order.
pub fn masked_entries(m: &ComplexMatrix, mask: &[bool]) -> Result<Vec<C64>> {
    let (rows, cols) = m.shape();
    if mask.len() != rows * cols {
        return Err(Error::SizeMismatch("mask does not match matrix".into()));
    }
    let mut out = Vec::new();
    for c in 0..cols {
        for r in 0..rows {
            if mask[r * cols + c] {
                out.push(m[(r, c)]);
            }
        }
    }
    Ok(out)
}

pub fn demap(d: &ComplexMatrix, mapping: &QamMapping, mask: &[bool]) -> Result<Vec<u8>> {
    Ok(mapping.demap_symbols(&masked_entries(d, mask)?))
}

pub fn nmse(perfect: &EcmSet, estimated: &EcmSet) -> Result<f64> {
    if perfect.blocks.len() != estimated.blocks.len() {
        return Err(Error::SizeMismatch("ECM sets differ in block count".into()));
    }
    let mut acc = 0.0;
    for (h, e) in perfect.blocks.iter().zip(&estimated.blocks) {
        let p = h.norm_sqr();
        if p == 0.0 {
            return Err(Error::Undefined("perfect ECM has zero norm".into()));
        }
        acc += e.sub(h)?.norm_sqr() / p;
    }
    Ok(acc / perfect.blocks.len() as f64)
}
