use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::FftPlanner;

use super::ComplexMatrix;
use crate::{Error, Result, C64};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unitary DFT of `buf` in place. Forward uses exp(-j2πpq/n), inverse the
/// conjugate; both are scaled by 1/√n.
pub fn dft_in_place(buf: &mut [C64], inverse: bool) {
    let n = buf.len();
    if n == 0 {
        return;
    }
    let fft = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    });
    fft.process(buf);
    let s = 1.0 / (n as f64).sqrt();
    for x in buf.iter_mut() {
        *x *= s;
    }
}

pub fn unitary_dft_matrix(n: usize) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("DFT size must be at least 1".into()));
    }
    let s = 1.0 / (n as f64).sqrt();
    Ok(ComplexMatrix::from_fn(n, n, |p, q| {
        // reduce the exponent first to keep the phase accurate for large n
        let e = ((p * q) % n) as f64 / n as f64;
        C64::from_polar(s, -2.0 * PI * e)
    }))
}

fn transform_columns(m: &mut ComplexMatrix, inverse: bool) {
    let (rows, cols) = m.shape();
    let mut buf = vec![C64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for (r, b) in buf.iter_mut().enumerate() {
            *b = m[(r, c)];
        }
        dft_in_place(&mut buf, inverse);
        m.set_column(c, &buf);
    }
}

fn transform_rows(m: &mut ComplexMatrix, inverse: bool) {
    let cols = m.cols();
    for chunk in m.as_mut_slice().chunks_mut(cols) {
        dft_in_place(chunk, inverse);
    }
}

/// DD to FT domain: `F_M · D · F_N^H`.
pub fn isft(d: &ComplexMatrix) -> ComplexMatrix {
    let mut x = d.clone();
    transform_columns(&mut x, false);
    transform_rows(&mut x, true);
    x
}

/// FT to DD domain: `F_M^H · Y · F_N`, the inverse of [`isft`].
pub fn sft(y: &ComplexMatrix) -> ComplexMatrix {
    let mut d = y.clone();
    transform_columns(&mut d, true);
    transform_rows(&mut d, false);
    d
}

const SINGULAR_GUARD: f64 = 1e-12;

/// `Σ_{k=0}^{len-1} exp(j2πkz/period)` in closed form.
pub fn exp_sum(z: f64, len: usize, period: usize) -> C64 {
    let p = period as f64;
    let den = (PI * z / p).sin();
    if den.abs() <= SINGULAR_GUARD {
        // z/period is an integer: every term equals one
        return C64::new(len as f64, 0.0);
    }
    let num = (PI * z * len as f64 / p).sin();
    C64::from_polar(num / den, PI * z * (len as f64 - 1.0) / p)
}

/// `(1/n) Σ_{k=0}^{n-1} exp(j2πkz/n)`.
pub fn dirichlet_kernel(z: f64, n: usize) -> C64 {
    assert!(n >= 1, "dirichlet kernel needs n >= 1");
    exp_sum(z, n, n) / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_isft(d: &ComplexMatrix) -> ComplexMatrix {
        let fm = unitary_dft_matrix(d.rows()).unwrap();
        let fn_ = unitary_dft_matrix(d.cols()).unwrap();
        fm.matmul(d).unwrap().matmul(&fn_.adjoint()).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        // small LCG keeps these unit tests free of RNG plumbing
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        ComplexMatrix::from_fn(rows, cols, |_, _| C64::new(next(), next()))
    }

    #[test]
    fn dft_matrix_small_cases() {
        assert_eq!(unitary_dft_matrix(1).unwrap()[(0, 0)], C64::new(1.0, 0.0));
        let f2 = unitary_dft_matrix(2).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((f2[(1, 1)] - C64::new(-h, 0.0)).norm() < 1e-15);
        assert!((f2[(0, 1)] - C64::new(h, 0.0)).norm() < 1e-15);
        assert!(unitary_dft_matrix(0).is_err());
    }

    #[test]
    fn dft_matrix_is_unitary() {
        let f = unitary_dft_matrix(8).unwrap();
        let g = f.adjoint().matmul(&f).unwrap();
        assert!(g.sub(&ComplexMatrix::identity(8)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn isft_of_impulse_is_flat() {
        let mut d = ComplexMatrix::zeros(2, 2);
        d[(0, 0)] = C64::new(1.0, 0.0);
        let x = isft(&d);
        for v in x.as_slice() {
            assert!((v - C64::new(0.5, 0.0)).norm() < 1e-15);
        }
        let back = sft(&x);
        assert!(back.sub(&d).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn isft_matches_dense_product() {
        let d = random_matrix(8, 4, 3);
        let fast = isft(&d);
        let dense = dense_isft(&d);
        assert!(fast.sub(&dense).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn zero_maps_to_zero() {
        let z = ComplexMatrix::zeros(4, 2);
        assert_eq!(isft(&z).max_abs(), 0.0);
        assert_eq!(sft(&z).max_abs(), 0.0);
    }

    #[test]
    fn dirichlet_examples() {
        assert!((dirichlet_kernel(0.0, 7) - C64::new(1.0, 0.0)).norm() < 1e-15);
        for m in -20i32..20 {
            let expect = if m.rem_euclid(8) == 0 { 1.0 } else { 0.0 };
            assert!((dirichlet_kernel(m as f64, 8) - C64::new(expect, 0.0)).norm() < 1e-12);
        }
        let direct: C64 = (0..4)
            .map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 * 0.5 / 4.0))
            .sum::<C64>()
            / 4.0;
        let v = dirichlet_kernel(0.5, 4);
        assert!((v - direct).norm() < 1e-14);
        assert!((v - C64::new(0.25, 0.603553)).norm() < 1e-6);
    }

    proptest! {
        #[test]
        fn dirichlet_periodic(z in -30.0f64..30.0, n in 1usize..40, s in -3i64..4) {
            let a = dirichlet_kernel(z + (s * n as i64) as f64, n);
            let b = dirichlet_kernel(z, n);
            prop_assert!((a - b).norm() < 1e-9);
        }

        #[test]
        fn exp_sum_matches_summation(z in -40.0f64..40.0, len in 1usize..50, period in 1usize..70) {
            let direct: C64 = (0..len)
                .map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 * z / period as f64))
                .sum();
            prop_assert!((exp_sum(z, len, period) - direct).norm() < 1e-9 * len as f64);
        }

        #[test]
        fn sft_inverts_isft(rows in 1usize..9, cols in 1usize..9, seed in any::<u64>()) {
            let d = random_matrix(rows, cols, seed);
            let x = isft(&d);
            prop_assert!((x.frobenius_norm() - d.frobenius_norm()).abs() <= 1e-10 * d.frobenius_norm().max(1.0));
            prop_assert!(sft(&x).sub(&d).unwrap().max_abs() < 1e-10);
        }
    }
}
