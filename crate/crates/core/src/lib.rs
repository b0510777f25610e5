//! Level-anticrossing nuclear polarization toolkit for boron-vacancy spin
//! ensembles in hexagonal boron nitride.
//!
//! The linear-algebra layer and the spectral line-shape math are generic over
//! the floating point type; the concrete aliases below fix it to `f64`.

pub mod error;
pub mod hamiltonian;
pub mod lindblad;
pub mod polarization;
pub mod scalar;
pub mod spin_algebra;
pub mod spectra;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double precision complex scalar.
pub type C64 = num_complex::Complex<f64>;
/// Double precision dense complex matrix.
pub type CMatrix = spin_algebra::ComplexMatrix<f64>;
