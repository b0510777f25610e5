use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::evolve::{integrate, relax, EvolveOptions, EvolveStats, Stepper};
use super::generator::Generator;
use super::implicit::coupled_blocks;
use super::{DensityMatrix, JumpOperator};
use crate::error::{Error, Result};
use crate::spin_algebra::hermitian_eig;
use crate::{CMatrix, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteadyStateMethod {
    /// Time integration from the maximally mixed state.
    Integrate,
    /// Dense Liouvillian null vector (oracle sizes only).
    Nullspace,
    /// Classical rate equation in the Hamiltonian eigenbasis.
    Secular,
}

impl fmt::Display for SteadyStateMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Integrate => "integrate",
            Self::Nullspace => "nullspace",
            Self::Secular => "secular",
        })
    }
}

impl FromStr for SteadyStateMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integrate" => Ok(Self::Integrate),
            "nullspace" => Ok(Self::Nullspace),
            "secular" => Ok(Self::Secular),
            other => Err(Error::InvalidParameter(format!("unknown steady-state method: {other}"))),
        }
    }
}

/// Largest dimension accepted by the dense Liouvillian backend.
pub const NULLSPACE_MAX_DIM: usize = 32;

/// Relative residual `‖L ρ‖_F / ‖ρ‖_F` at which time integration stops.
pub const INTEGRATE_RESIDUAL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct SteadyStateReport {
    pub state: DensityMatrix,
    pub method: SteadyStateMethod,
    /// Integration statistics (integrate backend only).
    pub stats: Option<EvolveStats>,
}

pub fn steady_state(h: &CMatrix, jumps: &[JumpOperator], method: SteadyStateMethod) -> Result<DensityMatrix> {
    steady_state_with(h, jumps, method).map(|r| r.state)
}

pub fn steady_state_with(h: &CMatrix, jumps: &[JumpOperator], method: SteadyStateMethod) -> Result<SteadyStateReport> {
    let gen = Generator::new(h, jumps)?;
    if !gen.is_dissipative() {
        return Err(Error::NoDissipation);
    }
    let (state, stats) = match method {
        SteadyStateMethod::Integrate => {
            let rho0 = CMatrix::identity(gen.dim).scale_real(1.0 / gen.dim as f64);
            let (y, stats) = if gen.dense.is_empty() {
                relax(&gen, rho0, INTEGRATE_RESIDUAL, 200)?
            } else {
                let opts = EvolveOptions {
                    tol: 1e-6,
                    stepper: Stepper::Explicit,
                    max_steps: 20_000,
                };
                integrate(&gen, rho0, None, Some(INTEGRATE_RESIDUAL), &opts)?
            };
            (DensityMatrix::new(y)?, Some(stats))
        }
        SteadyStateMethod::Nullspace => (nullspace(&gen)?, None),
        SteadyStateMethod::Secular => (secular(&gen)?, None),
    };
    Ok(SteadyStateReport { state, method, stats })
}

fn nullspace(gen: &Generator) -> Result<DensityMatrix> {
    let n = gen.dim;
    if n > NULLSPACE_MAX_DIM {
        return Err(Error::NullspaceTooLarge(n));
    }
    let nn = n * n;
    let v = |i: usize, j: usize| i * n + j;
    let mut l = DMatrix::<C64>::zeros(nn, nn);
    let mi = C64::new(0.0, -1.0);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let a = gen.heff[(i, k)];
                if a != C64::new(0.0, 0.0) {
                    l[(v(i, j), v(k, j))] += mi * a;
                }
                let b = gen.heff[(j, k)].conj();
                if b != C64::new(0.0, 0.0) {
                    l[(v(i, j), v(i, k))] -= mi * b;
                }
            }
        }
    }
    for &(to, from, r) in &gen.transitions {
        l[(v(to, to), v(from, from))] += C64::new(r, 0.0);
    }
    for (op, r) in &gen.dense {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for m in 0..n {
                        let w = op[(i, k)] * op[(j, m)].conj();
                        if w != C64::new(0.0, 0.0) {
                            l[(v(i, j), v(k, m))] += w * *r;
                        }
                    }
                }
            }
        }
    }
    // replace the ρ00 equation by the trace condition
    for c in 0..nn {
        l[(0, c)] = C64::new(0.0, 0.0);
    }
    for k in 0..n {
        l[(0, v(k, k))] = C64::new(1.0, 0.0);
    }
    let mut rhs = DVector::<C64>::zeros(nn);
    rhs[0] = C64::new(1.0, 0.0);
    let lu = l.lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..nn).map(|k| u[(k, k)].norm()).collect();
    let big = diag.iter().cloned().fold(0.0, f64::max);
    let small = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if small <= 1e-12 * big {
        return Err(Error::NonUniqueSteadyState(format!(
            "Liouvillian pivot ratio {:.3e}",
            small / big.max(f64::MIN_POSITIVE)
        )));
    }
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::NonUniqueSteadyState("singular Liouvillian".into()))?;
    let rho = CMatrix::from_fn(n, n, |i, j| x[v(i, j)]);
    DensityMatrix::new(rho.hermitian_part())
}

fn secular(gen: &Generator) -> Result<DensityMatrix> {
    let n = gen.dim;
    let h = &gen.h;
    let mut u = CMatrix::zeros(n, n);
    // eigenstates of each block; `span[k]` lists the eigen-columns touching basis state k
    let mut span: Vec<std::ops::Range<usize>> = vec![0..0; n];
    let mut col = 0;
    for idx in coupled_blocks(h) {
        let e = hermitian_eig(&h.submatrix(&idx, &idx))?;
        let m = idx.len();
        for (i, &r) in idx.iter().enumerate() {
            for j in 0..m {
                u[(r, col + j)] = e.vectors[(i, j)];
            }
            span[r] = col..col + m;
        }
        col += m;
    }
    let weight = |r: usize, a: usize| u[(r, a)].norm_sqr();

    // W[b, a]: rate from eigenstate a to eigenstate b
    let mut w = DMatrix::<f64>::zeros(n, n);
    for &(to, from, r) in &gen.transitions {
        for b in span[to].clone() {
            let wb = r * weight(to, b);
            if wb == 0.0 {
                continue;
            }
            for a in span[from].clone() {
                w[(b, a)] += wb * weight(from, a);
            }
        }
    }
    if !gen.dense.is_empty() {
        let ua = u.adjoint();
        for (op, r) in &gen.dense {
            let t = ua.matmul(op).matmul(&u);
            for b in 0..n {
                for a in 0..n {
                    w[(b, a)] += r * t[(b, a)].norm_sqr();
                }
            }
        }
    }

    single_closed_class(&w)?;
    let mut g = w.clone();
    for a in 0..n {
        let out: f64 = (0..n).map(|b| w[(b, a)]).sum();
        g[(a, a)] -= out;
    }
    for a in 0..n {
        g[(n - 1, a)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let p = g
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NonUniqueSteadyState("singular rate matrix".into()))?;
    let p: Vec<f64> = p.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = p.iter().sum();
    let rho = CMatrix::from_fn(n, n, |i, j| {
        let mut s = C64::new(0.0, 0.0);
        for a in span[i].start.max(span[j].start)..span[i].end.min(span[j].end) {
            s += u[(i, a)] * u[(j, a)].conj() * (p[a] / total);
        }
        s
    });
    DensityMatrix::new(rho)
}

/// Requires exactly one closed communicating class of the rate graph.
fn single_closed_class(w: &DMatrix<f64>) -> Result<()> {
    let n = w.nrows();
    let scale = w.iter().cloned().fold(0.0, f64::max);
    let cut = 1e-14 * scale;
    let mut graph = DiGraph::<(), ()>::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for a in 0..n {
        for b in 0..n {
            if a != b && w[(b, a)] > cut {
                graph.add_edge(nodes[a], nodes[b], ());
            }
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut component = vec![0; n];
    for (c, members) in sccs.iter().enumerate() {
        for m in members {
            component[m.index()] = c;
        }
    }
    let closed = sccs
        .iter()
        .enumerate()
        .filter(|(c, members)| {
            members
                .iter()
                .all(|m| graph.neighbors(*m).all(|nb| component[nb.index()] == *c))
        })
        .count();
    if closed == 1 {
        Ok(())
    } else {
        Err(Error::NonUniqueSteadyState(format!("{closed} closed classes in the secular rate graph")))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_block_hamiltonian, build_jump_operators, JumpKind, StateLayout};
    use super::*;
    use crate::hamiltonian::SystemParams;

    fn two_level(rate_down: f64, rate_up: f64, coupling: f64) -> (CMatrix, Vec<JumpOperator>) {
        let h = CMatrix::from_real_rows(&[&[1.0, coupling], &[coupling, 0.0]]);
        let jumps = vec![
            JumpOperator::transition(2, 1, 0, rate_down, JumpKind::Custom).unwrap(),
            JumpOperator::transition(2, 0, 1, rate_up, JumpKind::Custom).unwrap(),
        ];
        (h, jumps)
    }

    #[test]
    fn detailed_balance_two_level() {
        let (h, jumps) = two_level(3.0, 1.0, 0.0);
        for m in [SteadyStateMethod::Nullspace, SteadyStateMethod::Secular, SteadyStateMethod::Integrate] {
            let rho = steady_state(&h, &jumps, m).unwrap();
            assert!((rho.matrix()[(0, 0)].re - 0.25).abs() < 1e-7, "{m}");
        }
    }

    #[test]
    fn driven_two_level_integrate_matches_nullspace() {
        let (h, jumps) = two_level(0.5, 0.1, 0.3);
        let a = steady_state(&h, &jumps, SteadyStateMethod::Nullspace).unwrap();
        let b = steady_state(&h, &jumps, SteadyStateMethod::Integrate).unwrap();
        assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-6);
    }

    #[test]
    fn errors() {
        let h = CMatrix::zeros(2, 2);
        assert!(matches!(steady_state(&h, &[], SteadyStateMethod::Secular), Err(Error::NoDissipation)));
        let p = SystemParams::default();
        let h = build_block_hamiltonian(&p, 50.0).unwrap();
        let jumps = build_jump_operators(&p).unwrap();
        let err = steady_state(&h, &jumps, SteadyStateMethod::Nullspace).unwrap_err();
        assert!(err.to_string().contains("nullspace restricted to oracle sizes"));
        // two disconnected decaying pairs
        let h = CMatrix::zeros(4, 4);
        let jumps = vec![
            JumpOperator::transition(4, 1, 0, 1.0, JumpKind::Custom).unwrap(),
            JumpOperator::transition(4, 3, 2, 1.0, JumpKind::Custom).unwrap(),
        ];
        let err = steady_state(&h, &jumps, SteadyStateMethod::Secular).unwrap_err();
        assert!(err.to_string().contains("non-unique steady state"));
        let err = steady_state(&h, &jumps, SteadyStateMethod::Nullspace).unwrap_err();
        assert!(err.to_string().contains("non-unique steady state"));
    }

    #[test]
    fn fast_mixing_uniform_shelving() {
        let mut p = SystemParams::single_nucleus();
        p.rates.gamma_mix = 1e5;
        let h = build_block_hamiltonian(&p, 50.0).unwrap();
        let jumps = build_jump_operators(&p).unwrap();
        let rho = steady_state(&h, &jumps, SteadyStateMethod::Nullspace).unwrap();
        let l = StateLayout::for_params(&p);
        let pops: Vec<f64> = (0..3).map(|k| rho.matrix()[(l.shelving(k), l.shelving(k))].re).collect();
        let total: f64 = pops.iter().sum();
        for x in pops {
            assert!((x / total - 1.0 / 3.0).abs() < 1e-4);
        }
    }
}
