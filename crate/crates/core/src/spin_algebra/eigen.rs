//! Hermitian eigensolver: Householder reduction to a real symmetric
//! tridiagonal matrix followed by implicit QL iterations.

use num_complex::Complex;

use super::ComplexMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigen-decomposition of a Hermitian matrix. `values` ascend and column `k`
/// of `vectors` is the normalized eigenvector of `values[k]`.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T: Real> {
    pub values: Vec<T>,
    pub vectors: ComplexMatrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Rebuilds `V diag(λ) V†`.
    pub fn reconstruct(&self) -> ComplexMatrix<T> {
        let n = self.dim();
        let v = &self.vectors;
        ComplexMatrix::from_fn(n, n, |i, j| {
            (0..n).fold(Complex::new(T::zero(), T::zero()), |acc, k| {
                acc + v[(i, k)] * v[(j, k)].conj() * self.values[k]
            })
        })
    }
}

fn hermitian_tolerance<T: Real>() -> T {
    T::of(1e-10).max(T::epsilon() * T::of(1e3))
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
pub fn hermitian_eig<T: Real>(m: &ComplexMatrix<T>) -> Result<HermitianEigen<T>> {
    decompose(m, true)
}

/// Eigenvalues only, ascending.
pub fn hermitian_eigvals<T: Real>(m: &ComplexMatrix<T>) -> Result<Vec<T>> {
    decompose(m, false).map(|e| e.values)
}

fn decompose<T: Real>(m: &ComplexMatrix<T>, want_vectors: bool) -> Result<HermitianEigen<T>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let defect = m.hermitian_defect();
    if defect > hermitian_tolerance() {
        return Err(Error::NotHermitian(defect.as_f64()));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(HermitianEigen {
            values: Vec::new(),
            vectors: ComplexMatrix::zeros(0, 0),
        });
    }

    let (mut d, mut e, mut z) = tridiagonalize(m, want_vectors);
    implicit_ql(&mut d, &mut e, z.as_mut())?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = match z {
        Some(z) => ComplexMatrix::from_fn(n, n, |i, j| z[(i, order[j])]),
        None => ComplexMatrix::zeros(0, 0),
    };
    Ok(HermitianEigen { values, vectors })
}

/// Reduces `m` to real tridiagonal form `Z† m Z = tridiag(e, d, e)`.
/// Returns the diagonal, the sub-diagonal (last entry zero) and, on request, `Z`.
fn tridiagonalize<T: Real>(
    m: &ComplexMatrix<T>,
    want_vectors: bool,
) -> (Vec<T>, Vec<T>, Option<ComplexMatrix<T>>) {
    let n = m.rows();
    let zero = Complex::new(T::zero(), T::zero());
    let mut a = m.hermitian_part();
    let mut q = want_vectors.then(|| ComplexMatrix::identity(n));
    let mut u = vec![zero; n];
    let mut p = vec![zero; n];

    for k in 0..n.saturating_sub(2) {
        let lo = k + 1;
        let alpha = (lo..n).fold(T::zero(), |acc, i| acc + a[(i, k)].norm_sqr()).sqrt();
        let tail = (lo + 1..n).fold(T::zero(), |acc, i| acc + a[(i, k)].norm_sqr());
        if tail == T::zero() {
            continue;
        }
        let x0 = a[(lo, k)];
        let phase = if x0.norm() > T::zero() {
            x0 / x0.norm()
        } else {
            Complex::new(T::one(), T::zero())
        };
        // v = x + phase·α·e1, reflect x onto -phase·α·e1
        for i in lo..n {
            u[i] = a[(i, k)];
        }
        u[lo] += phase * alpha;
        let vnorm = (lo..n).fold(T::zero(), |acc, i| acc + u[i].norm_sqr()).sqrt();
        for ui in u.iter_mut().take(n).skip(lo) {
            *ui = *ui / vnorm;
        }

        // trailing block update: B' = B - u w† - w u†, w = p - (u†p) u, p = 2 B u
        let two = T::of(2.0);
        for i in lo..n {
            let mut acc = zero;
            for j in lo..n {
                acc += a[(i, j)] * u[j];
            }
            p[i] = acc * two;
        }
        let mut upu = zero;
        for i in lo..n {
            upu += u[i].conj() * p[i];
        }
        for i in lo..n {
            p[i] -= u[i] * upu;
        }
        for i in lo..n {
            for j in lo..n {
                let delta = u[i] * p[j].conj() + p[i] * u[j].conj();
                a[(i, j)] -= delta;
            }
        }
        let beta = -phase * alpha;
        a[(lo, k)] = beta;
        a[(k, lo)] = beta.conj();
        for i in lo + 1..n {
            a[(i, k)] = zero;
            a[(k, i)] = zero;
        }

        if let Some(q) = q.as_mut() {
            // Q ← Q (I - 2uu†)
            for r in 0..n {
                let mut acc = zero;
                for j in lo..n {
                    acc += q[(r, j)] * u[j];
                }
                let acc = acc * two;
                for j in lo..n {
                    q[(r, j)] -= acc * u[j].conj();
                }
            }
        }
    }

    // unitary diagonal phase making the sub-diagonal real and non-negative
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    let mut delta = Complex::new(T::one(), T::zero());
    let mut phases = vec![delta; n];
    for k in 0..n {
        d[k] = a[(k, k)].re;
        if k + 1 < n {
            let s = a[(k + 1, k)];
            let r = s.norm();
            e[k] = r;
            if r > T::zero() {
                delta = delta * (s / r);
            }
            phases[k + 1] = delta;
        }
    }
    if let Some(q) = q.as_mut() {
        for r in 0..n {
            for c in 0..n {
                q[(r, c)] = q[(r, c)] * phases[c];
            }
        }
    }
    (d, e, q)
}

/// Implicit QL with Wilkinson-style shifts on a symmetric tridiagonal matrix;
/// `e[i]` couples `d[i]` and `d[i + 1]`. Rotations accumulate into `z`.
fn implicit_ql<T: Real>(d: &mut [T], e: &mut [T], mut z: Option<&mut ComplexMatrix<T>>) -> Result<()> {
    let n = d.len();
    let two = T::of(2.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::EigenNonConvergence);
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r } else { -r });
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    for k in 0..n {
                        let f = z[(k, i + 1)];
                        let zi = z[(k, i)];
                        z[(k, i + 1)] = zi * s + f * c;
                        z[(k, i)] = zi * c - f * s;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn diagonal_input_sorts() {
        let m: ComplexMatrix<f64> = ComplexMatrix::from_real_diagonal(&[3.0, 1.0, 2.0]);
        let e = hermitian_eig(&m).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pauli_x() {
        let m: ComplexMatrix<f64> = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let e = hermitian_eig(&m).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // (1, ∓1)/√2 up to a global phase
        let v0 = e.vectors.column(0);
        let v1 = e.vectors.column(1);
        assert!(((v0[0] + v0[1]).norm()) < 1e-14 && (v0[0].norm() - s).abs() < 1e-14);
        assert!(((v1[0] - v1[1]).norm()) < 1e-14 && (v1[0].norm() - s).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(hermitian_eig(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn complex_3x3() {
        let m = ComplexMatrix::new(
            3,
            3,
            vec![
                c(2.0, 0.0),
                c(1.0, 1.0),
                c(0.0, -2.0),
                c(1.0, -1.0),
                c(-1.0, 0.0),
                c(0.5, 0.5),
                c(0.0, 2.0),
                c(0.5, -0.5),
                c(0.3, 0.0),
            ],
        )
        .unwrap();
        let e = hermitian_eig(&m).unwrap();
        assert!(e.reconstruct().max_abs_diff(&m) < 1e-13);
        // trace check
        let tr: f64 = e.values.iter().sum();
        assert!((tr - 1.3).abs() < 1e-13);
    }

    #[test]
    fn works_in_single_precision() {
        let m: ComplexMatrix<f32> = ComplexMatrix::from_real_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let e = hermitian_eig(&m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-6);
        assert!((e.values[1] - 3.0).abs() < 1e-6);
    }
}
