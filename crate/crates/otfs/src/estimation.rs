//! GCE-BEM coefficient estimation shared by both modems: a CSI-independent
//! operator `A_ce` with the eigen-factors of `A_ce A_ce^H` precomputed.

use crate::numerics::{hermitian_eig, unvectorize, vectorize, ComplexMatrix, EigenFactors};
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct CeOperator {
    a: ComplexMatrix,
    eig: EigenFactors,
    ah_q: ComplexMatrix,
    m_h: usize,
    n: usize,
}

impl CeOperator {
    /// `a` maps column-stacked `M_h × N` coefficients to column-stacked
    /// observations.
    pub fn new(a: ComplexMatrix, m_h: usize, n: usize) -> Result<Self> {
        if a.cols() != m_h * n {
            return Err(Error::SizeMismatch(format!(
                "operator has {} columns, expected M_h·N = {}",
                a.cols(),
                m_h * n
            )));
        }
        let gram = a.matmul(&a.adjoint())?;
        let eig = hermitian_eig(&gram)?;
        let ah_q = a.adjoint().matmul(&eig.eigvecs)?;
        Ok(Self { a, eig, ah_q, m_h, n })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.a
    }

    pub fn eigen(&self) -> &EigenFactors {
        &self.eig
    }

    /// LMMSE estimate with regularization `γ = σ_w² · rows(A_ce)`.
    pub fn estimate(&self, y_ce: &ComplexMatrix, sigma_w_sq: f64) -> Result<ComplexMatrix> {
        let gamma = sigma_w_sq * self.a.rows() as f64;
        self.estimate_with_gamma(y_ce, gamma)
    }

    pub fn estimate_with_gamma(&self, y_ce: &ComplexMatrix, gamma: f64) -> Result<ComplexMatrix> {
        let y = vectorize(y_ce);
        if y.len() != self.a.rows() {
            return Err(Error::SizeMismatch(format!(
                "observation has {} entries, operator expects {}",
                y.len(),
                self.a.rows()
            )));
        }
        if !gamma.is_finite() {
            return Ok(ComplexMatrix::zeros(self.m_h, self.n));
        }
        let q = &self.eig.eigvecs;
        let mut z = vec![C64::new(0.0, 0.0); y.len()];
        for (c, zc) in z.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (r, yr) in y.iter().enumerate() {
                acc += q[(r, c)].conj() * yr;
            }
            let d = self.eig.eigvals[c] + gamma;
            *zc = if d > 0.0 { acc / d } else { C64::new(0.0, 0.0) };
        }
        unvectorize(&self.ah_q.mul_vec(&z)?, self.m_h, self.n)
    }
}
