//! Linear solves `(I - c L) X = B` for generators whose jumps are all
//! single transitions `|i⟩⟨j|`.
//!
//! Such a generator splits as `L = A + E R D`: `A X = -i(Heff X - X Heff†)`
//! couples only within Hamiltonian blocks, `D` extracts the diagonal, `R` is
//! the transition-rate matrix and `E` re-embeds a vector as a diagonal matrix.
//! `(I - cA)` is a Sylvester operator solved blockwise in the complex Schur
//! basis of `Heff`; the low-rank recycling part is handled by a Woodbury
//! correction on the diagonal.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Dyn, Schur, LU};
use petgraph::unionfind::UnionFind;

use super::generator::Generator;
use crate::error::{Error, Result};
use crate::{CMatrix, C64};

type ZMat = DMatrix<C64>;

struct Block {
    idx: Vec<usize>,
    q: ZMat,
    q_adj: ZMat,
    t: ZMat,
}

struct Factor {
    lu: LU<f64, Dyn, Dyn>,
}

pub(crate) struct ImplicitSolver<'g> {
    gen: &'g Generator,
    blocks: Vec<Block>,
    /// `(block, position)` of every basis state.
    place: Vec<(usize, usize)>,
    cache: HashMap<u64, Factor>,
}

/// Connected components of the off-diagonal sparsity pattern of `m`.
pub(crate) fn coupled_blocks(m: &CMatrix) -> Vec<Vec<usize>> {
    let n = m.rows();
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if m[(i, j)] != C64::new(0.0, 0.0) || m[(j, i)] != C64::new(0.0, 0.0) {
                uf.union(i, j);
            }
        }
    }
    let labels = uf.into_labeling();
    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &r) in labels.iter().enumerate() {
        by_root[r].push(i);
    }
    by_root.into_iter().filter(|b| !b.is_empty()).collect()
}

impl<'g> ImplicitSolver<'g> {
    pub fn new(gen: &'g Generator) -> Result<Self> {
        if !gen.dense.is_empty() {
            return Err(Error::InvalidParameter(
                "implicit solver supports single-transition jump operators only".into(),
            ));
        }
        let mut blocks = Vec::new();
        let mut place = vec![(0, 0); gen.dim];
        for (bi, idx) in coupled_blocks(&gen.heff).into_iter().enumerate() {
            let m = idx.len();
            let sub = ZMat::from_fn(m, m, |i, j| gen.heff[(idx[i], idx[j])]);
            let (q, t) = if m == 1 {
                (ZMat::identity(1, 1), sub)
            } else {
                Schur::try_new(sub, 1e-15, 100_000)
                    .ok_or(Error::EigenNonConvergence)?
                    .unpack()
            };
            for (pos, &k) in idx.iter().enumerate() {
                place[k] = (bi, pos);
            }
            blocks.push(Block {
                q_adj: q.adjoint(),
                q,
                t,
                idx,
            });
        }
        Ok(Self {
            gen,
            blocks,
            place,
            cache: HashMap::new(),
        })
    }

    /// Solves `Y + ic T_a Y - ic Y T_b† = C` in place, with `T` the Schur factors.
    fn sylvester_schur(&self, a: usize, b: usize, c: f64, y: &mut ZMat) {
        let ta = &self.blocks[a].t;
        let tb = &self.blocks[b].t;
        let (ma, mb) = (ta.nrows(), tb.nrows());
        let ic = C64::new(0.0, c);
        let one = C64::new(1.0, 0.0);
        let mut v = DVector::<C64>::zeros(ma);
        for col in (0..mb).rev() {
            for i in 0..ma {
                v[i] = y[(i, col)];
            }
            for bp in col + 1..mb {
                let f = ic * tb[(col, bp)].conj();
                if f != C64::new(0.0, 0.0) {
                    for i in 0..ma {
                        v[i] += y[(i, bp)] * f;
                    }
                }
            }
            let shift = one - ic * tb[(col, col)].conj();
            for i in (0..ma).rev() {
                let mut s = v[i];
                for k in i + 1..ma {
                    s -= ic * ta[(i, k)] * y[(k, col)];
                }
                y[(i, col)] = s / (shift + ic * ta[(i, i)]);
            }
        }
    }

    /// `(I - cA)^{-1} B`, skipping block pairs of `B` that are exactly zero.
    /// With `diagonal_only` only pairs `(a, a)` are visited.
    fn apply_cinv(&self, b: &CMatrix, c: f64, diagonal_only: bool) -> CMatrix {
        let mut out = CMatrix::zeros(self.gen.dim, self.gen.dim);
        for (ai, ba) in self.blocks.iter().enumerate() {
            for (bi, bb) in self.blocks.iter().enumerate() {
                if diagonal_only && ai != bi {
                    continue;
                }
                let rhs = ZMat::from_fn(ba.idx.len(), bb.idx.len(), |i, j| b[(ba.idx[i], bb.idx[j])]);
                if rhs.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                    continue;
                }
                let mut y = &ba.q_adj * rhs * &bb.q;
                self.sylvester_schur(ai, bi, c, &mut y);
                let x = &ba.q * y * &bb.q_adj;
                for (i, &r) in ba.idx.iter().enumerate() {
                    for (j, &s) in bb.idx.iter().enumerate() {
                        out[(r, s)] = x[(i, j)];
                    }
                }
            }
        }
        out
    }

    fn factor(&mut self, c: f64) -> Result<&Factor> {
        let key = c.to_bits();
        if !self.cache.contains_key(&key) {
            let f = self.build_factor(c)?;
            if self.cache.len() > 64 {
                self.cache.clear();
            }
            self.cache.insert(key, f);
        }
        Ok(&self.cache[&key])
    }

    fn build_factor(&self, c: f64) -> Result<Factor> {
        let n = self.gen.dim;
        // K[k, j] = diag((I - cA)^{-1} |j⟩⟨j|)[k], block diagonal
        let mut k = DMatrix::<f64>::zeros(n, n);
        for (ai, ba) in self.blocks.iter().enumerate() {
            let m = ba.idx.len();
            for (pj, &j) in ba.idx.iter().enumerate() {
                let mut y = ZMat::from_fn(m, m, |r, s| ba.q[(pj, r)].conj() * ba.q[(pj, s)]);
                self.sylvester_schur(ai, ai, c, &mut y);
                let x = &ba.q * y * &ba.q_adj;
                for (pk, &kk) in ba.idx.iter().enumerate() {
                    k[(kk, j)] = x[(pk, pk)].re;
                }
            }
        }
        let mut m = DMatrix::<f64>::identity(n, n);
        for &(to, from, r) in &self.gen.transitions {
            let (bt, _) = self.place[to];
            for &kk in &self.blocks[bt].idx {
                m[(kk, from)] -= c * k[(kk, to)] * r;
            }
        }
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular(format!("Woodbury correction at c = {c:.3e}")));
        }
        Ok(Factor { lu })
    }

    /// Solves `(I - cL) X = B`.
    pub fn solve(&mut self, b: &CMatrix, c: f64) -> Result<CMatrix> {
        let n = self.gen.dim;
        let z = self.apply_cinv(b, c, false);
        let d = z.diagonal();
        let re = DVector::from_fn(n, |i, _| d[i].re);
        let im = DVector::from_fn(n, |i, _| d[i].im);
        let factor = self.factor(c)?;
        let pr = factor
            .lu
            .solve(&re)
            .ok_or_else(|| Error::Singular("Woodbury solve".into()))?;
        let pi = factor
            .lu
            .solve(&im)
            .ok_or_else(|| Error::Singular("Woodbury solve".into()))?;
        let mut recycled = CMatrix::zeros(n, n);
        for &(to, from, r) in &self.gen.transitions {
            recycled[(to, to)] += C64::new(pr[from], pi[from]) * (c * r);
        }
        let corr = self.apply_cinv(&recycled, c, true);
        Ok(&z + &corr)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{JumpKind, JumpOperator};
    use super::*;

    fn residual(gen: &Generator, x: &CMatrix, b: &CMatrix, c: f64) -> f64 {
        let lx = gen.apply(x);
        let lhs = x - &lx.scale_real(c);
        lhs.max_abs_diff(b)
    }

    #[test]
    fn solves_shifted_system() {
        let h = CMatrix::from_real_rows(&[
            &[0.0, 0.4, 0.0, 0.0, 0.0],
            &[0.4, 1.0, 0.2, 0.0, 0.0],
            &[0.0, 0.2, -0.5, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 2.0, 0.7],
            &[0.0, 0.0, 0.0, 0.7, 0.0],
        ]);
        let t = |a, b, r| JumpOperator::transition(5, a, b, r, JumpKind::Custom).unwrap();
        let jumps = vec![t(3, 0, 1.0), t(4, 1, 0.5), t(0, 3, 2.0), t(2, 4, 0.3), t(1, 2, 0.9)];
        let gen = Generator::new(&h, &jumps).unwrap();
        let mut s = ImplicitSolver::new(&gen).unwrap();
        let b = CMatrix::from_fn(5, 5, |i, j| C64::new((i * 5 + j) as f64 * 0.1, (i as f64 - j as f64) * 0.05));
        for c in [1e-3, 0.1, 10.0] {
            let x = s.solve(&b, c).unwrap();
            assert!(residual(&gen, &x, &b, c) < 1e-10 * (1.0 + c), "c = {c}");
        }
    }
}
