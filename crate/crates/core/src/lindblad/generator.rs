use std::f64::consts::TAU;

use super::{DensityMatrix, JumpMatrix, JumpOperator};
use crate::error::{Error, Result};
use crate::{CMatrix, C64};

/// Lindblad generator in angular units (1/µs), split as
/// `L(ρ) = -i(Heff ρ - ρ Heff†) + Σ Γ L ρ L†` with `Heff = 2π H - (i/2) Σ Γ L†L`.
#[derive(Clone, Debug)]
pub(crate) struct Generator {
    pub dim: usize,
    pub h: CMatrix,
    pub heff: CMatrix,
    heff_adj: CMatrix,
    /// `(to, from, 2πΓ)`.
    pub transitions: Vec<(usize, usize, f64)>,
    /// `(L, 2πΓ)`.
    pub dense: Vec<(CMatrix, f64)>,
}

impl Generator {
    pub fn new(h: &CMatrix, jumps: &[JumpOperator]) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::DimensionMismatch(format!("Hamiltonian is {}x{}", h.rows(), h.cols())));
        }
        let defect = h.hermitian_defect();
        if defect > 1e-10 {
            return Err(Error::NotHermitian(defect));
        }
        let dim = h.rows();
        let h = h.scale_real(TAU);
        let mut heff = h.clone();
        let mut transitions = Vec::new();
        let mut dense = Vec::new();
        for j in jumps {
            if j.dim() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "jump operator of dimension {} with a {dim}-dimensional Hamiltonian",
                    j.dim()
                )));
            }
            if j.rate == 0.0 {
                continue;
            }
            let rate = TAU * j.rate;
            match &j.op {
                JumpMatrix::Transition { to, from } => {
                    heff[(*from, *from)] -= C64::new(0.0, 0.5 * rate);
                    transitions.push((*to, *from, rate));
                }
                JumpMatrix::Dense(m) => {
                    let ldl = m.adjoint().matmul(m);
                    heff -= &ldl.scale(C64::new(0.0, 0.5 * rate));
                    dense.push((m.clone(), rate));
                }
            }
        }
        let heff_adj = heff.adjoint();
        Ok(Self {
            dim,
            h,
            heff,
            heff_adj,
            transitions,
            dense,
        })
    }

    pub fn is_dissipative(&self) -> bool {
        !self.transitions.is_empty() || !self.dense.is_empty()
    }

    /// Total outgoing rate of every basis state through transition jumps.
    pub fn out_rates(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for &(_, from, r) in &self.transitions {
            g[from] += r;
        }
        g
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = &self.heff.matmul(rho) - &rho.matmul(&self.heff_adj);
        for z in out.data_mut() {
            *z = C64::new(z.im, -z.re);
        }
        for &(to, from, r) in &self.transitions {
            out[(to, to)] += rho[(from, from)] * r;
        }
        for (l, r) in &self.dense {
            out += &l.matmul(rho).matmul(&l.adjoint()).scale_real(*r);
        }
        out
    }
}

/// `dρ/dt` in 1/µs for a Hamiltonian in MHz and rates in MHz (2π applied here).
pub fn lindblad_rhs(h: &CMatrix, jumps: &[JumpOperator], rho: &DensityMatrix) -> Result<CMatrix> {
    if rho.dim() != h.rows() {
        return Err(Error::DimensionMismatch(format!(
            "state of dimension {} with a {}-dimensional Hamiltonian",
            rho.dim(),
            h.rows()
        )));
    }
    Ok(Generator::new(h, jumps)?.apply(rho.matrix()))
}

#[cfg(test)]
mod tests {
    use super::super::JumpKind;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_mixing_fixes_maximally_mixed() {
        let n = 4;
        let h = CMatrix::from_real_diagonal(&[0.0, 1.0, 3.0, 7.0]);
        let mut jumps = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    jumps.push(JumpOperator::transition(n, a, b, 2.5, JumpKind::Custom).unwrap());
                }
            }
        }
        let d = lindblad_rhs(&h, &jumps, &DensityMatrix::maximally_mixed(n)).unwrap();
        assert!(d.max_abs() < 1e-14);
    }

    #[test]
    fn amplitude_damping_rate() {
        let h = CMatrix::zeros(2, 2);
        let jumps = [JumpOperator::transition(2, 1, 0, 0.7, JumpKind::Custom).unwrap()];
        let rho = DensityMatrix::basis_state(2, 0).unwrap();
        let d = lindblad_rhs(&h, &jumps, &rho).unwrap();
        assert!((d[(0, 0)].re + TAU * 0.7).abs() < 1e-12);
        assert!((d[(1, 1)].re - TAU * 0.7).abs() < 1e-12);
    }

    #[test]
    fn dense_and_transition_forms_agree() {
        let h = CMatrix::from_real_rows(&[&[0.0, 0.3, 0.0], &[0.3, 1.0, 0.2], &[0.0, 0.2, -0.5]]);
        let t = JumpOperator::transition(3, 2, 0, 1.3, JumpKind::Custom).unwrap();
        let d = JumpOperator::dense(t.matrix(), 1.3).unwrap();
        let rho = DensityMatrix::new(CMatrix::from_real_rows(&[&[0.5, 0.1, 0.0], &[0.1, 0.3, 0.05], &[0.0, 0.05, 0.2]]))
            .unwrap();
        let a = lindblad_rhs(&h, &[t], &rho).unwrap();
        let b = lindblad_rhs(&h, &[d], &rho).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-13);
    }

    #[test]
    fn rejects_mismatched_dims() {
        let h = CMatrix::zeros(3, 3);
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(matches!(lindblad_rhs(&h, &[], &rho), Err(Error::DimensionMismatch(_))));
    }

    fn random_state(n: usize, seed: Vec<(f64, f64)>) -> DensityMatrix {
        let a = CMatrix::new(n, n, seed.into_iter().map(|(x, y)| C64::new(x, y)).collect()).unwrap();
        let m = a.matmul(&a.adjoint());
        let tr = m.trace().re;
        DensityMatrix::new(m.scale_real(1.0 / tr)).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn trace_free_and_hermitian(
            seed in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 25),
            hv in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 25),
            rates in prop::collection::vec(0.0f64..10.0, 6),
        ) {
            let n = 5;
            let rho = random_state(n, seed);
            let h = CMatrix::new(n, n, hv.into_iter().map(|(x, y)| C64::new(x, y)).collect()).unwrap().hermitian_part();
            let pairs = [(0, 1), (1, 0), (2, 4), (4, 3), (3, 2), (1, 4)];
            let jumps: Vec<JumpOperator> = pairs
                .iter()
                .zip(&rates)
                .map(|(&(a, b), &r)| JumpOperator::transition(n, a, b, r, JumpKind::Custom).unwrap())
                .collect();
            let d = lindblad_rhs(&h, &jumps, &rho).unwrap();
            let scale = rho.matrix().frobenius_norm() * (1.0 + h.max_abs() + rates.iter().sum::<f64>());
            prop_assert!(d.trace().norm() < 1e-12 * scale);
            prop_assert!((&d - &d.adjoint()).max_abs() < 1e-12 * scale);
        }
    }
}
