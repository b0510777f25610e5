//! Nuclear polarization from steady states, and its dependence on field.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::SystemParams;
use crate::lindblad::{build_jump_operators, steady_state, BlockHamiltonian, DensityMatrix, SteadyStateMethod, StateLayout};

/// Ground `m_s = 0` populations grouped by total `m_I`, ordered `+n … -n`.
/// Entries already include the degeneracy of each group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DickePopulations {
    pops: Vec<f64>,
}

impl DickePopulations {
    pub fn new(pops: Vec<f64>) -> Result<Self> {
        if pops.len() < 3 || pops.len() % 2 == 0 {
            return Err(Error::InvalidParameter(format!("need 2n+1 populations, got {}", pops.len())));
        }
        if pops.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParameter("populations must be finite and non-negative".into()));
        }
        Ok(Self { pops })
    }

    pub fn pops(&self) -> &[f64] {
        &self.pops
    }

    pub fn nuclei(&self) -> usize {
        (self.pops.len() - 1) / 2
    }

    /// `m_I` of entry `k`.
    pub fn m_i(&self, k: usize) -> i32 {
        self.nuclei() as i32 - k as i32
    }

    pub fn total(&self) -> f64 {
        self.pops.iter().sum()
    }
}

/// Sums the ground `m_s = 0` diagonal of a full optical-cycle state by total `m_I`.
pub fn nuclear_populations(rho: &DensityMatrix) -> Result<DickePopulations> {
    let dim = rho.dim();
    let nuclei = (1..=3)
        .find(|&n| 7 * 3usize.pow(n) == dim)
        .ok_or_else(|| Error::DimensionMismatch(format!("{dim} is not an optical-cycle state dimension")))?;
    let layout = StateLayout::new(nuclei as usize);
    let nd = layout.nuclear_dim();
    let mut pops = vec![0.0; 2 * nuclei as usize + 1];
    let m = rho.matrix();
    for (r, idx) in layout.ground_ms0().enumerate() {
        // digit 0 is m_I = +1, so the digit sum counts down from +n
        let mut k = 0;
        let mut rest = r;
        let mut span = nd;
        while span > 1 {
            span /= 3;
            k += rest / span;
            rest %= span;
        }
        pops[k] += m[(idx, idx)].re.max(0.0);
    }
    DickePopulations::new(pops)
}

/// `P = Σ m_I p / (n Σ p)`, in `[-1, 1]`.
pub fn polarization(d: &DickePopulations) -> Result<f64> {
    let total = d.total();
    if total <= 0.0 {
        return Err(Error::EmptyManifold);
    }
    let s: f64 = d.pops.iter().enumerate().map(|(k, p)| d.m_i(k) as f64 * p).sum();
    Ok(s / (d.nuclei() as f64 * total))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub b: f64,
    /// `None` when the steady-state solve failed at this field.
    pub polarization: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarizationCurve {
    pub backend: SteadyStateMethod,
    pub samples: Vec<CurvePoint>,
}

impl PolarizationCurve {
    pub fn converged(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.samples.iter().filter_map(|s| s.polarization.map(|p| (s.b, p)))
    }

    /// Field and value of the largest polarization.
    pub fn peak(&self) -> Option<(f64, f64)> {
        self.converged().max_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn peak_in(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        self.converged()
            .filter(|s| s.0 >= lo && s.0 <= hi)
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Interior local maxima among consecutive converged samples.
    pub fn local_maxima(&self) -> Vec<(f64, f64)> {
        let pts: Vec<(f64, f64)> = self.converged().collect();
        pts.windows(3)
            .filter(|w| w[1].1 > w[0].1 && w[1].1 >= w[2].1)
            .map(|w| w[1])
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.samples.iter().filter(|s| s.polarization.is_none()).count()
    }

    /// CSV with columns `b_mT,polarization,backend,converged`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("b_mT,polarization,backend,converged\n");
        for s in &self.samples {
            let (p, ok) = match s.polarization {
                Some(p) => (format!("{p:.11e}"), true),
                None => ("nan".to_string(), false),
            };
            let _ = writeln!(out, "{:.11e},{p},{},{ok}", s.b, self.backend);
        }
        out
    }
}

/// Steady-state polarization at one field.
pub fn polarization_at(p: &SystemParams, b: f64, method: SteadyStateMethod) -> Result<f64> {
    let h = BlockHamiltonian::new(p)?.at(b)?;
    let jumps = build_jump_operators(p)?;
    polarization(&nuclear_populations(&steady_state(&h, &jumps, method)?)?)
}

/// One steady-state solve per field, in parallel on the current rayon pool.
/// Failed fields become gaps in the curve.
pub fn sweep_polarization(p: &SystemParams, b_values: &[f64], method: SteadyStateMethod) -> Result<PolarizationCurve> {
    if b_values.is_empty() {
        return Err(Error::InvalidParameter("empty field list".into()));
    }
    if b_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("fields must be strictly increasing".into()));
    }
    p.validate()?;
    let block = BlockHamiltonian::new(p)?;
    let jumps = build_jump_operators(p)?;
    let samples = b_values
        .par_iter()
        .map(|&b| {
            let value = block
                .at(b)
                .and_then(|h| steady_state(&h, &jumps, method))
                .and_then(|rho| nuclear_populations(&rho))
                .and_then(|d| polarization(&d));
            CurvePoint {
                b,
                polarization: value.ok(),
            }
        })
        .collect();
    Ok(PolarizationCurve { backend: method, samples })
}

/// `lo, lo + step, …` up to `hi` inclusive (within a small tolerance).
pub fn field_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && lo.is_finite() && hi.is_finite() && lo < hi && lo >= 0.0) {
        return Err(Error::InvalidParameter(format!("invalid field grid ({lo}, {hi}, {step})")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| lo + k as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Hyperfine;
    use proptest::prelude::*;

    fn pops(v: &[f64]) -> DickePopulations {
        DickePopulations::new(v.to_vec()).unwrap()
    }

    #[test]
    fn polarization_examples() {
        assert_eq!(polarization(&pops(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap(), 1.0);
        assert!(polarization(&pops(&[1.0, 3.0, 6.0, 7.0, 6.0, 3.0, 1.0])).unwrap().abs() < 1e-15);
        let p = polarization(&pops(&[2.0, 3.0, 6.0, 7.0, 6.0, 3.0, 0.0])).unwrap();
        assert!((p - 6.0 / 81.0).abs() < 1e-15);
        assert!(matches!(polarization(&pops(&[0.0; 7])), Err(Error::EmptyManifold)));
        assert!(DickePopulations::new(vec![1.0; 6]).is_err());
        assert!(DickePopulations::new(vec![1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn populations_of_simple_states() {
        let mixed = DensityMatrix::maximally_mixed(189);
        let d = nuclear_populations(&mixed).unwrap();
        let w = 27.0 / 189.0;
        for (x, g) in d.pops().iter().zip([1.0, 3.0, 6.0, 7.0, 6.0, 3.0, 1.0]) {
            assert!((x - g / 27.0 * w).abs() < 1e-15);
        }
        let top = DensityMatrix::basis_state(189, 27).unwrap();
        assert_eq!(nuclear_populations(&top).unwrap().pops(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let bottom = DensityMatrix::basis_state(189, 53).unwrap();
        assert_eq!(nuclear_populations(&bottom).unwrap().pops()[6], 1.0);
        let single = DensityMatrix::basis_state(21, 5).unwrap();
        assert_eq!(nuclear_populations(&single).unwrap().pops(), &[0.0, 0.0, 1.0]);
        assert!(matches!(
            nuclear_populations(&DensityMatrix::maximally_mixed(20)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn populations_sum_to_block_trace() {
        let w: Vec<f64> = (0..189).map(|k| 1.0 + (k * 7 % 13) as f64).collect();
        let rho = DensityMatrix::diagonal(&w).unwrap();
        let d = nuclear_populations(&rho).unwrap();
        let trace: f64 = (27..54).map(|k| rho.matrix()[(k, k)].re).sum();
        assert!((d.total() - trace).abs() < 1e-12);
    }

    #[test]
    fn grid_arithmetic() {
        assert_eq!(field_grid(28.0, 200.0, 2.0).unwrap().len(), 87);
        assert_eq!(field_grid(0.0, 1.0, 0.1).unwrap().len(), 11);
        assert!(field_grid(5.0, 1.0, 1.0).is_err());
        assert!(field_grid(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn zero_hyperfine_single_nucleus_is_unpolarized() {
        let p = SystemParams {
            a_gs: Hyperfine::zero(),
            a_es: Hyperfine::zero(),
            ..SystemParams::single_nucleus()
        };
        let curve = sweep_polarization(&p, &[50.0, 124.0, 160.0], SteadyStateMethod::Nullspace).unwrap();
        assert_eq!(curve.failures(), 0);
        for (_, x) in curve.converged() {
            assert!(x.abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn zero_hyperfine_full_model_is_unpolarized() {
        let p = SystemParams {
            a_gs: Hyperfine::zero(),
            a_es: Hyperfine::zero(),
            ..SystemParams::default()
        };
        let curve = sweep_polarization(&p, &[60.0, 124.0], SteadyStateMethod::Secular).unwrap();
        for (_, x) in curve.converged() {
            assert!(x.abs() < 1e-9, "{x}");
        }
        assert_eq!(curve.failures(), 0);
    }

    #[test]
    fn sweep_rejects_bad_fields() {
        let p = SystemParams::single_nucleus();
        assert!(sweep_polarization(&p, &[], SteadyStateMethod::Secular).is_err());
        assert!(sweep_polarization(&p, &[2.0, 1.0], SteadyStateMethod::Secular).is_err());
    }

    #[test]
    fn failures_are_gaps() {
        let p = SystemParams::default();
        let curve = sweep_polarization(&p, &[10.0, 20.0], SteadyStateMethod::Nullspace).unwrap();
        assert_eq!(curve.failures(), 2);
        let csv = curve.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().ends_with(",nan,nullspace,false"));
    }

    #[test]
    fn curve_queries() {
        let c = PolarizationCurve {
            backend: SteadyStateMethod::Secular,
            samples: [(1.0, 0.1), (2.0, 0.3), (3.0, 0.2), (4.0, 0.25), (5.0, 0.1)]
                .iter()
                .map(|&(b, x)| CurvePoint { b, polarization: Some(x) })
                .collect(),
        };
        assert_eq!(c.peak(), Some((2.0, 0.3)));
        assert_eq!(c.peak_in(3.0, 5.0), Some((4.0, 0.25)));
        assert_eq!(c.local_maxima(), vec![(2.0, 0.3), (4.0, 0.25)]);
    }

    proptest! {
        #[test]
        fn scale_invariant_and_antisymmetric(
            v in prop::collection::vec(0.0f64..1.0, 7),
            s in 1e-3f64..1e3,
        ) {
            prop_assume!(v.iter().sum::<f64>() > 1e-6);
            let p = polarization(&pops(&v)).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
            prop_assert!((polarization(&pops(&scaled)).unwrap() - p).abs() < 1e-12);
            let rev: Vec<f64> = v.iter().rev().cloned().collect();
            prop_assert!((polarization(&pops(&rev)).unwrap() + p).abs() < 1e-12);
            prop_assert!(p.abs() <= 1.0 + 1e-12);
        }
    }
}
