//! Optical-cycle open-system model: block Hamiltonian, jump operators,
//! Lindblad generator, time evolution and steady states.

mod evolve;
mod generator;
mod implicit;
mod steady;

pub use evolve::{evolve, evolve_with, EvolveOptions, EvolveStats, Stepper};
pub use generator::lindblad_rhs;
pub use steady::{steady_state, steady_state_with, SteadyStateMethod, SteadyStateReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{Manifold, ManifoldTerms, SystemParams};
use crate::spin_algebra::hermitian_eigvals;
use crate::{CMatrix, C64};

/// Incoherent rates of the optical cycle, MHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    /// Radiative decay excited → ground.
    pub gamma_r: f64,
    /// Intersystem crossing from excited `m_s = 0`.
    pub gamma_0: f64,
    /// Intersystem crossing from excited `m_s = ±1`.
    pub gamma_1: f64,
    /// Shelving → ground `m_s = 0`.
    pub kappa_0: f64,
    /// Shelving → ground `m_s = ±1`.
    pub kappa_1: f64,
    /// Nuclear-spin scrambling inside the shelving manifold.
    pub gamma_mix: f64,
}

impl Default for RateSet {
    fn default() -> Self {
        Self {
            gamma_r: 0.11,
            gamma_0: 220.0,
            gamma_1: 450.0,
            kappa_0: 210.0,
            kappa_1: 10.0,
            gamma_mix: 30.0,
        }
    }
}

impl RateSet {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("gamma_r", self.gamma_r),
            ("gamma_0", self.gamma_0),
            ("gamma_1", self.gamma_1),
            ("kappa_0", self.kappa_0),
            ("kappa_1", self.kappa_1),
            ("gamma_mix", self.gamma_mix),
        ];
        for (name, v) in all {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("rate {name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Index map of the `[ground | excited | shelving]` state ordering.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateLayout {
    nd: usize,
}

impl StateLayout {
    pub fn new(nuclei: usize) -> Self {
        Self {
            nd: 3usize.pow(nuclei as u32),
        }
    }

    pub fn for_params(p: &SystemParams) -> Self {
        Self::new(p.nuclei)
    }

    pub fn nuclear_dim(&self) -> usize {
        self.nd
    }

    pub fn dim(&self) -> usize {
        7 * self.nd
    }

    /// Ground state with electron index `e` (0: `m_s=+1`, 1: `m_s=0`, 2: `m_s=-1`).
    pub fn ground(&self, e: usize, nuc: usize) -> usize {
        e * self.nd + nuc
    }

    pub fn excited(&self, e: usize, nuc: usize) -> usize {
        3 * self.nd + e * self.nd + nuc
    }

    pub fn shelving(&self, nuc: usize) -> usize {
        6 * self.nd + nuc
    }

    pub fn manifold_range(&self, m: Manifold) -> std::ops::Range<usize> {
        match m {
            Manifold::Ground => 0..3 * self.nd,
            Manifold::Excited => 3 * self.nd..6 * self.nd,
            Manifold::Shelving => 6 * self.nd..7 * self.nd,
        }
    }

    /// Ground `m_s = 0` sub-block.
    pub fn ground_ms0(&self) -> std::ops::Range<usize> {
        self.nd..2 * self.nd
    }
}

/// Field-linear decomposition of the block Hamiltonian for repeated builds.
#[derive(Clone, Debug)]
pub struct BlockHamiltonian {
    layout: StateLayout,
    ground: ManifoldTerms,
    excited: ManifoldTerms,
}

impl BlockHamiltonian {
    pub fn new(p: &SystemParams) -> Result<Self> {
        Ok(Self {
            layout: StateLayout::for_params(p),
            ground: ManifoldTerms::new(p, Manifold::Ground)?,
            excited: ManifoldTerms::new(p, Manifold::Excited)?,
        })
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn at(&self, b: f64) -> Result<CMatrix> {
        let g = self.ground.at(b)?;
        let e = self.excited.at(b)?;
        let n = self.layout.dim();
        let m = 3 * self.layout.nuclear_dim();
        let mut h = CMatrix::zeros(n, n);
        for i in 0..m {
            for j in 0..m {
                h[(i, j)] = g[(i, j)];
                h[(m + i, m + j)] = e[(i, j)];
            }
        }
        Ok(h)
    }
}

/// Hamiltonian over `[ground | excited | shelving]` at field `b`; the shelving block is zero.
pub fn build_block_hamiltonian(p: &SystemParams, b: f64) -> Result<CMatrix> {
    BlockHamiltonian::new(p)?.at(b)
}

/// Physical origin of a jump operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpKind {
    Pump,
    Radiative,
    Intersystem,
    ShelvingReturn,
    Mixing,
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub enum JumpMatrix {
    /// `|to⟩⟨from|`.
    Transition { to: usize, from: usize },
    Dense(CMatrix),
}

/// Jump operator `L` with rate `Γ` (MHz), contributing `Γ (L ρ L† - {L†L, ρ}/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpOperator {
    dim: usize,
    pub op: JumpMatrix,
    pub rate: f64,
    pub kind: JumpKind,
}

impl JumpOperator {
    pub fn transition(dim: usize, to: usize, from: usize, rate: f64, kind: JumpKind) -> Result<Self> {
        if to >= dim || from >= dim {
            return Err(Error::DimensionMismatch(format!("transition {from} -> {to} outside dimension {dim}")));
        }
        check_rate(rate)?;
        Ok(Self {
            dim,
            op: JumpMatrix::Transition { to, from },
            rate,
            kind,
        })
    }

    pub fn dense(matrix: CMatrix, rate: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch("jump operator must be square".into()));
        }
        check_rate(rate)?;
        Ok(Self {
            dim: matrix.rows(),
            op: JumpMatrix::Dense(matrix),
            rate,
            kind: JumpKind::Custom,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> CMatrix {
        match &self.op {
            JumpMatrix::Transition { to, from } => {
                let mut m = CMatrix::zeros(self.dim, self.dim);
                m[(*to, *from)] = C64::new(1.0, 0.0);
                m
            }
            JumpMatrix::Dense(m) => m.clone(),
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate.is_finite() && rate >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("jump rate must be finite and non-negative, got {rate}")))
    }
}

/// Jump operators of the optical cycle. Channels with zero rate are omitted.
pub fn build_jump_operators(p: &SystemParams) -> Result<Vec<JumpOperator>> {
    p.validate()?;
    let l = StateLayout::for_params(p);
    let (n, nd) = (l.dim(), l.nuclear_dim());
    let r = &p.rates;
    let mut out = Vec::new();
    let mut push = |to, from, rate: f64, kind| -> Result<()> {
        if rate > 0.0 {
            out.push(JumpOperator::transition(n, to, from, rate, kind)?);
        }
        Ok(())
    };
    for e in 0..3 {
        let (isc, back) = if e == 1 { (r.gamma_0, r.kappa_0) } else { (r.gamma_1, r.kappa_1) };
        for nuc in 0..nd {
            push(l.excited(e, nuc), l.ground(e, nuc), p.pump_rate, JumpKind::Pump)?;
            push(l.ground(e, nuc), l.excited(e, nuc), r.gamma_r, JumpKind::Radiative)?;
            push(l.shelving(nuc), l.excited(e, nuc), isc, JumpKind::Intersystem)?;
            push(l.ground(e, nuc), l.shelving(nuc), back, JumpKind::ShelvingReturn)?;
        }
    }
    for from in 0..nd {
        for to in 0..nd {
            if to != from {
                push(l.shelving(to), l.shelving(from), r.gamma_mix, JumpKind::Mixing)?;
            }
        }
    }
    Ok(out)
}

/// Trace-one Hermitian positive-semidefinite state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Validates Hermiticity (1e-10), unit trace (1e-9) and positivity (-1e-8).
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!("density matrix is {}x{}", m.rows(), m.cols())));
        }
        let defect = m.hermitian_defect();
        if defect > 1e-10 {
            return Err(Error::InvalidState(format!("Hermiticity defect {defect:.3e}")));
        }
        let tr = m.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-9 {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let m = m.hermitian_part();
        let lowest = hermitian_eigvals(&m)?.first().copied().unwrap_or(0.0);
        if lowest < -1e-8 {
            return Err(Error::InvalidState(format!("negative eigenvalue {lowest:.3e}")));
        }
        Ok(Self(m))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMatrix::identity(dim).scale_real(1.0 / dim as f64))
    }

    /// `|k⟩⟨k|`.
    pub fn basis_state(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::DimensionMismatch(format!("basis index {k} outside dimension {dim}")));
        }
        let mut m = CMatrix::zeros(dim, dim);
        m[(k, k)] = C64::new(1.0, 0.0);
        Ok(Self(m))
    }

    /// Diagonal state with the given weights, normalized to unit trace.
    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || total <= 0.0 {
            return Err(Error::InvalidState("diagonal weights must be non-negative with positive sum".into()));
        }
        let d: Vec<f64> = weights.iter().map(|w| w / total).collect();
        Ok(Self(CMatrix::from_real_diagonal(&d)))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn populations(&self) -> Vec<f64> {
        self.0.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(hermitian_eigvals(&self.0)?.first().copied().unwrap_or(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_structure() {
        let p = SystemParams::default();
        let h = build_block_hamiltonian(&p, 75.0).unwrap();
        assert_eq!(h.rows(), 189);
        for i in 0..189 {
            for j in 0..189 {
                let same = (i < 81 && j < 81) || ((81..162).contains(&i) && (81..162).contains(&j));
                if !same {
                    assert_eq!(h[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
        let g = crate::hamiltonian::build_manifold_hamiltonian(&p, Manifold::Ground, 75.0).unwrap();
        let idx: Vec<usize> = (0..81).collect();
        assert_eq!(h.submatrix(&idx, &idx), g);
    }

    #[test]
    fn jump_count_and_form() {
        let p = SystemParams::default();
        let jumps = build_jump_operators(&p).unwrap();
        assert_eq!(jumps.len(), 3 * 27 * 4 + 27 * 26);
        for j in jumps.iter().take(20) {
            let m = j.matrix();
            let nz: Vec<C64> = m.data().iter().copied().filter(|z| z.norm() != 0.0).collect();
            assert_eq!(nz, vec![C64::new(1.0, 0.0)]);
        }
    }

    #[test]
    fn frozen_nuclei_without_mixing() {
        let mut p = SystemParams::default();
        p.rates.gamma_mix = 0.0;
        let l = StateLayout::for_params(&p);
        let nuc = |k: usize| k % l.nuclear_dim();
        for j in build_jump_operators(&p).unwrap() {
            let JumpMatrix::Transition { to, from } = j.op else { panic!() };
            assert_eq!(nuc(to), nuc(from));
        }
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix::new(CMatrix::identity(3)).is_err());
        assert!(DensityMatrix::new(CMatrix::from_real_diagonal(&[1.5, -0.5])).is_err());
        let rho = DensityMatrix::maximally_mixed(4);
        assert!((rho.matrix().trace().re - 1.0).abs() < 1e-15);
        assert!(DensityMatrix::new(rho.into_matrix()).is_ok());
    }
}
