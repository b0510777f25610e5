use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{brightness_of, build_manifold_hamiltonian, Manifold, SystemParams};
use crate::lindblad::{DensityMatrix, StateLayout};
use crate::spin_algebra::{embed, hermitian_eig, spin_matrices};
use crate::{CMatrix, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "ms0")]
    Ms0,
    #[serde(rename = "msMinus1")]
    MsMinus1,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Ms0 => "ms0",
            Branch::MsMinus1 => "msMinus1",
        })
    }
}

impl FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ms0" => Ok(Branch::Ms0),
            "msMinus1" => Ok(Branch::MsMinus1),
            _ => Err(Error::InvalidParameter(format!("unknown branch {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdnmrLine {
    pub freq: f64,
    pub amplitude: f64,
    pub branch: Branch,
}

/// Transitions between ground eigenstates of one electron-spin branch with
/// frequency inside `window` (MHz). Amplitude is
/// `|⟨i|Ix|j⟩|² · |p_i - p_j| · |β_i - β_j|` with `Ix` the total nuclear
/// operator, `p` the steady-state populations of the eigenstates and `β`
/// their `m_s = 0` weight. Sorted by frequency.
pub fn odnmr_lines(
    p: &SystemParams,
    b: f64,
    branch: Branch,
    steady: &DensityMatrix,
    window: (f64, f64),
) -> Result<Vec<OdnmrLine>> {
    let layout = StateLayout::for_params(p);
    if steady.dim() != layout.dim() {
        return Err(Error::DimensionMismatch(format!(
            "steady state of dimension {} for a {}-state model",
            steady.dim(),
            layout.dim()
        )));
    }
    if !(window.0 >= 0.0 && window.0 < window.1) {
        return Err(Error::InvalidParameter(format!("invalid RF window {window:?}")));
    }
    let nd = layout.nuclear_dim();
    let h = build_manifold_hamiltonian(p, Manifold::Ground, b)?;
    let e = hermitian_eig(&h)?;
    let n = e.dim();

    let dims: Vec<usize> = std::iter::repeat(3).take(p.nuclei + 1).collect();
    let (ix, _, _) = spin_matrices::<f64>(1.0)?;
    let mut ix_total = CMatrix::zeros(n, n);
    for slot in 1..=p.nuclei {
        ix_total += &embed(&ix, slot, &dims)?;
    }
    let ix_eig = e.vectors.adjoint().matmul(&ix_total).matmul(&e.vectors);

    let ground: Vec<usize> = layout.manifold_range(Manifold::Ground).collect();
    let rho_g = steady.matrix().submatrix(&ground, &ground);
    let pops: Vec<f64> = (0..n)
        .map(|k| {
            let v: Vec<C64> = e.vectors.column(k);
            let mut s = C64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    s += v[i].conj() * rho_g[(i, j)] * v[j];
                }
            }
            s.re
        })
        .collect();
    let bright = brightness_of(&e.vectors, nd);
    let minus: Vec<f64> = (0..n)
        .map(|k| (2 * nd..3 * nd).map(|r| e.vectors[(r, k)].norm_sqr()).sum())
        .collect();
    let member = |k: usize| match branch {
        Branch::Ms0 => bright[k] >= 0.5,
        Branch::MsMinus1 => minus[k] >= 0.5,
    };

    let mut lines = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if !(member(i) && member(j)) {
                continue;
            }
            let freq = (e.values[j] - e.values[i]).abs();
            if freq < window.0 || freq > window.1 || freq == 0.0 {
                continue;
            }
            let amplitude = ix_eig[(i, j)].norm_sqr() * (pops[i] - pops[j]).abs() * (bright[i] - bright[j]).abs();
            lines.push(OdnmrLine { freq, amplitude, branch });
        }
    }
    let top = lines.iter().fold(0.0f64, |a, l| a.max(l.amplitude));
    lines.retain(|l| top > 0.0 && l.amplitude >= 1e-6 * top);
    lines.sort_by(|a, b| a.freq.total_cmp(&b.freq));
    Ok(lines)
}

/// `max - min` of the line frequencies, zero for fewer than two lines.
pub fn frequency_spread(lines: &[OdnmrLine]) -> f64 {
    let lo = lines.iter().map(|l| l.freq).fold(f64::INFINITY, f64::min);
    let hi = lines.iter().map(|l| l.freq).fold(f64::NEG_INFINITY, f64::max);
    if lines.len() < 2 {
        0.0
    } else {
        hi - lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Hyperfine;
    use crate::lindblad::{build_block_hamiltonian, build_jump_operators, steady_state, SteadyStateMethod};

    fn steady(p: &SystemParams, b: f64) -> DensityMatrix {
        let h = build_block_hamiltonian(p, b).unwrap();
        let jumps = build_jump_operators(p).unwrap();
        steady_state(&h, &jumps, SteadyStateMethod::Nullspace).unwrap()
    }

    #[test]
    fn zero_hyperfine_has_no_lines() {
        let p = SystemParams {
            a_gs: Hyperfine::zero(),
            a_es: Hyperfine::zero(),
            ..SystemParams::single_nucleus()
        };
        let rho = steady(&p, 80.0);
        for branch in [Branch::Ms0, Branch::MsMinus1] {
            assert!(odnmr_lines(&p, 80.0, branch, &rho, (0.0, 100.0)).unwrap().is_empty());
        }
    }

    #[test]
    fn lines_are_eigenvalue_differences() {
        let p = SystemParams::single_nucleus();
        let b = 110.0;
        let rho = steady(&p, b);
        let h = build_manifold_hamiltonian(&p, Manifold::Ground, b).unwrap();
        let w = crate::spin_algebra::hermitian_eigvals(&h).unwrap();
        for branch in [Branch::Ms0, Branch::MsMinus1] {
            let lines = odnmr_lines(&p, b, branch, &rho, (0.01, 50.0)).unwrap();
            assert!(!lines.is_empty());
            for l in &lines {
                assert!(l.freq > 0.0 && l.amplitude > 0.0 && l.branch == branch);
                let hit = w.iter().any(|x| w.iter().any(|y| ((x - y).abs() - l.freq).abs() < 1e-9));
                assert!(hit);
            }
            assert!(lines.windows(2).all(|p| p[0].freq <= p[1].freq));
        }
    }

    #[test]
    fn rejects_mismatched_state() {
        let p = SystemParams::default();
        let rho = DensityMatrix::maximally_mixed(21);
        assert!(matches!(
            odnmr_lines(&p, 80.0, Branch::Ms0, &rho, (0.0, 10.0)),
            Err(Error::DimensionMismatch(_))
        ));
        assert_eq!("msMinus1".parse::<Branch>().unwrap(), Branch::MsMinus1);
        assert!("ms1".parse::<Branch>().is_err());
    }
}
