use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use super::ComplexMatrix;
use crate::{Error, Result, C64};

/// Eigen-factors `A = Q Λ Q^H` of a Hermitian PSD matrix, eigenvalues
/// descending.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenFactors {
    pub eigvecs: ComplexMatrix,
    pub eigvals: Vec<f64>,
}

const HERMITIAN_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

pub fn hermitian_eig(a: &ComplexMatrix) -> Result<EigenFactors> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::ContractViolation(format!("{}x{} is not square", n, a.cols())));
    }
    let scale = a.max_abs().max(1.0);
    for r in 0..n {
        for c in r..n {
            if (a[(r, c)] - a[(c, r)].conj()).norm() > HERMITIAN_TOL * scale {
                return Err(Error::ContractViolation(format!(
                    "matrix is not Hermitian at ({r}, {c})"
                )));
            }
        }
    }
    let eig = SymmetricEigen::new(a.to_nalgebra());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut eigvals = Vec::with_capacity(n);
    for &i in &order {
        let l = eig.eigenvalues[i];
        if l < -PSD_TOL * scale {
            return Err(Error::ContractViolation(format!(
                "matrix is not positive semidefinite (eigenvalue {l:e})"
            )));
        }
        eigvals.push(l.max(0.0));
    }
    let eigvecs = ComplexMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenFactors { eigvecs, eigvals })
}

/// `(H^H H + σ² I)^{-1} H^H` through a Cholesky factorization of the Gram
/// matrix.
pub fn regularized_lmmse(h: &ComplexMatrix, noise_var: f64) -> Result<ComplexMatrix> {
    let (m, n) = h.shape();
    if m < n {
        return Err(Error::InvalidDimension(format!("LMMSE needs a tall matrix, got {m}x{n}")));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::ContractViolation(format!("noise variance {noise_var} is negative")));
    }
    let hn = h.to_nalgebra();
    let hh = hn.adjoint();
    let mut gram = &hh * &hn;
    for i in 0..n {
        gram[(i, i)] += C64::new(noise_var, 0.0);
    }
    let max_diag = (0..n).map(|i| gram[(i, i)].re).fold(0.0, f64::max);
    let chol = Cholesky::new(gram)
        .ok_or_else(|| Error::Singular("Gram matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    let min_pivot = (0..n).map(|i| l[(i, i)].re).fold(f64::INFINITY, f64::min);
    if max_diag == 0.0 || min_pivot * min_pivot < 1e-14 * max_diag {
        return Err(Error::Singular("Gram matrix is numerically rank deficient".into()));
    }
    Ok(ComplexMatrix::from_nalgebra(&chol.solve(&hh)))
}

/// Orthonormal basis of `{x : A x = 0}` for a wide `A`. Columns are ordered
/// by ascending singular value and each column's first non-negligible entry
/// is made real and positive.
pub fn null_space_basis(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (m, n) = a.shape();
    if m >= n {
        return Err(Error::InvalidDimension(format!("null space needs a wide matrix, got {m}x{n}")));
    }
    // zero-pad to square so the SVD returns a full right basis
    let mut sq = DMatrix::<C64>::zeros(n, n);
    for r in 0..m {
        for c in 0..n {
            sq[(r, c)] = a[(r, c)];
        }
    }
    let svd = sq.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Construction("SVD did not return right singular vectors".into()))?;
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let tol = n as f64 * smax * f64::EPSILON;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]).then(i.cmp(&j)));
    let rank = sv.iter().filter(|&&s| s > tol).count();
    let k = n - rank;

    let mut basis = ComplexMatrix::zeros(n, k.max(1));
    if k == 0 {
        return Err(Error::Construction("null space is trivial".into()));
    }
    for (col, &i) in order.iter().take(k).enumerate() {
        // rows of V^H are conjugated right singular vectors
        let mut v: Vec<C64> = (0..n).map(|r| v_t[(i, r)].conj()).collect();
        let peak = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if let Some(first) = v.iter().find(|x| x.norm() > 1e-8 * peak) {
            let phase = first.conj() / first.norm();
            for x in v.iter_mut() {
                *x *= phase;
            }
        }
        basis.set_column(col, &v);
    }
    Ok(basis)
}

/// Column-stacking: `v[r + rows·c] = M[r, c]`.
pub fn vectorize(m: &ComplexMatrix) -> Vec<C64> {
    let (rows, cols) = m.shape();
    let mut v = Vec::with_capacity(rows * cols);
    for c in 0..cols {
        for r in 0..rows {
            v.push(m[(r, c)]);
        }
    }
    v
}

pub fn unvectorize(v: &[C64], rows: usize, cols: usize) -> Result<ComplexMatrix> {
    if rows == 0 || cols == 0 || v.len() != rows * cols {
        return Err(Error::SizeMismatch(format!(
            "vector of length {} cannot form a {rows}x{cols} matrix",
            v.len()
        )));
    }
    Ok(ComplexMatrix::from_fn(rows, cols, |r, c| v[r + rows * c]))
}
