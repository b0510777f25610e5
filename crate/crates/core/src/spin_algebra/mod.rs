//! Dense complex matrices, spin operators and tensor-product helpers.

mod eigen;
mod matrix;

pub use eigen::{hermitian_eig, hermitian_eigvals, HermitianEigen};
pub use matrix::{commutator, ComplexMatrix};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Angular momentum matrices `(Sx, Sy, Sz)` for spin `s` in the basis
/// `m = +s, ..., -s`. Supported spins are 1/2, 1 and 3.
pub fn spin_matrices<T: Real>(s: f64) -> Result<(ComplexMatrix<T>, ComplexMatrix<T>, ComplexMatrix<T>)> {
    if ![0.5, 1.0, 3.0].contains(&s) {
        return Err(Error::UnsupportedSpin(s));
    }
    let n = (2.0 * s).round() as usize + 1;
    let m = |k: usize| s - k as f64;
    let zero = Complex::new(T::zero(), T::zero());

    let mut sx = ComplexMatrix::zeros(n, n);
    let mut sy = ComplexMatrix::zeros(n, n);
    let sz = ComplexMatrix::from_fn(n, n, |i, j| if i == j { Complex::new(T::of(m(i)), T::zero()) } else { zero });
    // <m+1| S+ |m> = sqrt(s(s+1) - m(m+1))
    for k in 1..n {
        let mk = m(k);
        let c = T::of((s * (s + 1.0) - mk * (mk + 1.0)).sqrt() / 2.0);
        sx[(k - 1, k)] = Complex::new(c, T::zero());
        sx[(k, k - 1)] = Complex::new(c, T::zero());
        sy[(k - 1, k)] = Complex::new(T::zero(), -c);
        sy[(k, k - 1)] = Complex::new(T::zero(), c);
    }
    Ok((sx, sy, sz))
}

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let (br, bc) = (b.rows(), b.cols());
    ComplexMatrix::from_fn(a.rows() * br, a.cols() * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Places `op` on subsystem `slot` of a tensor product with subsystem
/// dimensions `dims`, identity elsewhere.
pub fn embed<T: Real>(op: &ComplexMatrix<T>, slot: usize, dims: &[usize]) -> Result<ComplexMatrix<T>> {
    if slot >= dims.len() {
        return Err(Error::SlotOutOfRange { slot, len: dims.len() });
    }
    if !op.is_square() || op.rows() != dims[slot] {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{} but slot {slot} has dimension {}",
            op.rows(),
            op.cols(),
            dims[slot]
        )));
    }
    let left: usize = dims[..slot].iter().product();
    let right: usize = dims[slot + 1..].iter().product();
    Ok(kron(&kron(&ComplexMatrix::identity(left), op), &ComplexMatrix::identity(right)))
}
