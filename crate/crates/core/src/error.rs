use thiserror::Error;

/// Errors raised by the simulation and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported spin: {0}")]
    UnsupportedSpin(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("slot {slot} out of range for {len} subsystems")]
    SlotOutOfRange { slot: usize, len: usize },

    #[error("matrix is not Hermitian (relative defect {0:.3e})")]
    NotHermitian(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no anticrossing in range [{lo}, {hi}] mT")]
    NoAnticrossing { lo: f64, hi: f64 },

    #[error("eigensolver failed to converge")]
    EigenNonConvergence,

    #[error("stiffness failure at t = {t:.6e} us: step {step:.3e} us, error/time {err:.3e}")]
    StiffnessFailure { t: f64, step: f64, err: f64 },

    #[error("nullspace restricted to oracle sizes (dim {0} > 32)")]
    NullspaceTooLarge(usize),

    #[error("non-unique steady state: {0}")]
    NonUniqueSteadyState(String),

    #[error("steady state not reached: {0}")]
    SteadyStateNotReached(String),

    #[error("no jump operator with positive rate")]
    NoDissipation,

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("empty manifold: populations sum to zero")]
    EmptyManifold,

    #[error("zero total area")]
    ZeroArea,

    #[error("mixed area signs")]
    MixedAreaSigns,

    #[error("zero denominator in contrast")]
    ZeroDenominator,

    #[error("fit: {0}")]
    Fit(String),

    #[error("fit did not converge after {iterations} iterations (residual rms {residual_rms:.3e})")]
    FitNonConvergence {
        iterations: usize,
        residual_rms: f64,
        best: Box<crate::spectra::SpectrumFit>,
    },

    #[error("singular linear system: {0}")]
    Singular(String),
}

pub type Result<T> = std::result::Result<T, Error>;
