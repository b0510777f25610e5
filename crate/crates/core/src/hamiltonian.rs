//! Spin Hamiltonians of the ground and excited manifolds, level-anticrossing
//! search and eigenstate analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::RateSet;
use crate::spin_algebra::{embed, hermitian_eig, hermitian_eigvals, spin_matrices};
use crate::CMatrix;

/// Diagonal hyperfine tensor `(Ax, Ay, Az)` in MHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperfine {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Hyperfine {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Same tensor with the transverse components replaced by their mean.
    pub fn axial(&self) -> Self {
        let t = 0.5 * (self.x + self.y);
        Self::new(t, t, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|v| v.is_finite())
    }
}

/// Physical constants of the model. Frequencies in MHz, fields in mT.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub d_gs: f64,
    pub d_es: f64,
    pub gamma_e: f64,
    pub gamma_n: f64,
    pub q: f64,
    pub a_gs: Hyperfine,
    pub a_es: Hyperfine,
    pub rates: RateSet,
    pub pump_rate: f64,
    /// Number of spin-1 nuclei coupled to the electron (1 to 3).
    pub nuclei: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            d_gs: 3480.0,
            d_es: 2100.0,
            gamma_e: 28.0,
            gamma_n: 0.003077,
            q: -0.66,
            a_gs: Hyperfine::new(69.17, 137.36, 47.94),
            a_es: Hyperfine::new(23.06, 45.79, 23.07),
            rates: RateSet::default(),
            pump_rate: 1.0,
            nuclei: 3,
        }
    }
}

impl SystemParams {
    /// Defaults reduced to a single nucleus (21-state optical model).
    pub fn single_nucleus() -> Self {
        Self {
            nuclei: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("d_gs", self.d_gs),
            ("d_es", self.d_es),
            ("gamma_e", self.gamma_e),
            ("gamma_n", self.gamma_n),
            ("q", self.q),
            ("pump_rate", self.pump_rate),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        for (name, v) in [("gamma_e", self.gamma_e), ("gamma_n", self.gamma_n), ("pump_rate", self.pump_rate)] {
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !self.a_gs.is_finite() || !self.a_es.is_finite() {
            return Err(Error::InvalidParameter("hyperfine components must be finite".into()));
        }
        if !(1..=3).contains(&self.nuclei) {
            return Err(Error::InvalidParameter(format!("nuclei must be 1, 2 or 3, got {}", self.nuclei)));
        }
        self.rates.validate()
    }

    /// Dimension of the nuclear space, `3^nuclei`.
    pub fn nuclear_dim(&self) -> usize {
        3usize.pow(self.nuclei as u32)
    }

    pub fn zero_field_splitting(&self, m: Manifold) -> f64 {
        match m {
            Manifold::Ground => self.d_gs,
            Manifold::Excited => self.d_es,
            Manifold::Shelving => 0.0,
        }
    }

    pub fn hyperfine(&self, m: Manifold) -> Hyperfine {
        match m {
            Manifold::Ground => self.a_gs,
            Manifold::Excited => self.a_es,
            Manifold::Shelving => Hyperfine::zero(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    Ground,
    Excited,
    Shelving,
}

/// Field-independent and field-linear parts of a manifold Hamiltonian,
/// `H(b) = fixed + b * zeeman`.
#[derive(Clone, Debug)]
pub struct ManifoldTerms {
    pub fixed: CMatrix,
    pub zeeman: CMatrix,
}

impl ManifoldTerms {
    pub fn new(p: &SystemParams, m: Manifold) -> Result<Self> {
        p.validate()?;
        let nd = p.nuclear_dim();
        if m == Manifold::Shelving {
            return Ok(Self {
                fixed: CMatrix::zeros(nd, nd),
                zeeman: CMatrix::zeros(nd, nd),
            });
        }
        let (sx, sy, sz) = spin_matrices::<f64>(1.0)?;
        let dims = vec![3; p.nuclei + 1];
        let ops = [&sx, &sy, &sz];
        let a = p.hyperfine(m).components();

        let s: Vec<CMatrix> = ops.iter().map(|o| embed(o, 0, &dims)).collect::<Result<_>>()?;
        let mut fixed = s[2].matmul(&s[2]).scale_real(p.zero_field_splitting(m));
        let mut zeeman = s[2].scale_real(p.gamma_e);
        for n in 1..=p.nuclei {
            let i: Vec<CMatrix> = ops.iter().map(|o| embed(o, n, &dims)).collect::<Result<_>>()?;
            fixed += &i[2].matmul(&i[2]).scale_real(p.q);
            zeeman += &i[2].scale_real(p.gamma_n);
            for c in 0..3 {
                if a[c] != 0.0 {
                    fixed += &s[c].matmul(&i[c]).scale_real(a[c]);
                }
            }
        }
        Ok(Self { fixed, zeeman })
    }

    pub fn at(&self, b: f64) -> Result<CMatrix> {
        if !b.is_finite() || b < 0.0 {
            return Err(Error::InvalidParameter(format!("magnetic field must be finite and non-negative, got {b}")));
        }
        Ok(&self.fixed + &self.zeeman.scale_real(b))
    }
}

/// Spin Hamiltonian of one manifold at field `b` (mT), in MHz.
/// Ordering: electron ⊗ N1 ⊗ N2 ⊗ N3, each factor `m = +1, 0, -1`.
pub fn build_manifold_hamiltonian(p: &SystemParams, m: Manifold, b: f64) -> Result<CMatrix> {
    ManifoldTerms::new(p, m)?.at(b)
}

/// Adjacent eigenvalue pair whose splitting is reported: indices into the
/// ascending manifold spectrum and the symmetry sector that holds them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lower: usize,
    pub upper: usize,
    pub sector: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnticrossingReport {
    pub b_star: f64,
    pub gap: f64,
    pub branch: EigenPair,
}

/// All permutations of `0..n`.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Irreducible characters of the nuclear permutation group as
/// `(label, χ(sign, fixed points))`.
fn irreps(n: usize) -> Vec<(&'static str, fn(f64, usize) -> f64)> {
    match n {
        1 => vec![("A", |_, _| 1.0)],
        2 => vec![("A", |_, _| 1.0), ("B", |s, _| s)],
        _ => vec![
            ("A1", |_, _| 1.0),
            ("A2", |s, _| s),
            ("E", |_, f| match f {
                3 => 2.0,
                1 => 0.0,
                _ => -1.0,
            }),
        ],
    }
}

fn sign_of(p: &[usize]) -> f64 {
    let mut s = 1.0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i] > p[j] {
                s = -s;
            }
        }
    }
    s
}

/// Manifold Hamiltonian restricted to one symmetry sector: fixed parity of
/// `m_s + m_I` and one isotypic component under permutations of the nuclei.
#[derive(Clone, Debug)]
struct Sector {
    label: String,
    fixed: CMatrix,
    zeeman: CMatrix,
    /// Sector states belonging to the lower of the two electron-spin groups.
    low: usize,
}

fn symmetry_sectors(terms: &ManifoldTerms, nuclei: usize, low_block: usize) -> Result<Vec<Sector>> {
    let nd = 3usize.pow(nuclei as u32);
    let dim = 3 * nd;
    let parity: Vec<i32> = total_quantum_numbers(nd).iter().map(|l| l.rem_euclid(2)).collect();
    let perms = permutations(nuclei);
    let digit = |r: usize, k: usize| (r / 3usize.pow((nuclei - 1 - k) as u32)) % 3;
    let maps: Vec<Vec<usize>> = perms
        .iter()
        .map(|p| {
            (0..dim)
                .map(|i| {
                    let r = i % nd;
                    let q = (0..nuclei).fold(0, |acc, k| acc * 3 + digit(r, p[k]));
                    (i / nd) * nd + q
                })
                .collect()
        })
        .collect();

    let mut out = Vec::new();
    for (name, chi) in irreps(nuclei) {
        let d = chi(1.0, nuclei);
        let mut proj = CMatrix::zeros(dim, dim);
        for (p, map) in perms.iter().zip(&maps) {
            let fixed = p.iter().enumerate().filter(|(i, &v)| *i == v).count();
            let w = d * chi(sign_of(p), fixed) / perms.len() as f64;
            for (i, &j) in map.iter().enumerate() {
                proj[(j, i)] += crate::C64::new(w, 0.0);
            }
        }
        for par in 0..2 {
            let mut cols: Vec<Vec<crate::C64>> = Vec::new();
            let mut low = 0;
            for block in 0..3 {
                let idx: Vec<usize> = (block * nd..(block + 1) * nd).filter(|&i| parity[i] == par).collect();
                if idx.is_empty() {
                    continue;
                }
                let e = hermitian_eig(&proj.submatrix(&idx, &idx).hermitian_part())?;
                for k in (0..idx.len()).filter(|&k| e.values[k] > 0.5) {
                    let mut full = vec![crate::C64::new(0.0, 0.0); dim];
                    for (i, &r) in idx.iter().enumerate() {
                        full[r] = e.vectors[(i, k)];
                    }
                    cols.push(full);
                    if block == low_block {
                        low += 1;
                    }
                }
            }
            if cols.is_empty() {
                continue;
            }
            let v = CMatrix::from_fn(dim, cols.len(), |i, j| cols[j][i]);
            let va = v.adjoint();
            out.push(Sector {
                label: format!("{}/{name}", if par == 0 { "even" } else { "odd" }),
                fixed: va.matmul(&terms.fixed).matmul(&v).hermitian_part(),
                zeeman: va.matmul(&terms.zeeman).matmul(&v).hermitian_part(),
                low,
            });
        }
    }
    Ok(out)
}

/// Smallest splitting, over symmetry sectors, between the levels adiabatically
/// connected to the lower and the upper electron-spin group. Returns the gap
/// and the index of the sector attaining it.
fn sector_gap(sectors: &[Sector], b: f64) -> Result<(f64, usize)> {
    let mut best = (f64::INFINITY, 0);
    for (k, s) in sectors.iter().enumerate() {
        if s.low == 0 || s.low >= s.fixed.rows() {
            continue;
        }
        let w = hermitian_eigvals(&(&s.fixed + &s.zeeman.scale_real(b)))?;
        let g = w[s.low] - w[s.low - 1];
        if g < best.0 {
            best = (g, k);
        }
    }
    Ok(best)
}

/// Smallest separation between the sorted `m_s = 0` and `m_s = -1` level groups,
/// with groups assigned by electron-spin character.
fn matched_gap(terms: &ManifoldTerms, nd: usize, b: f64) -> Result<f64> {
    let e = hermitian_eig(&terms.at(b)?)?;
    let n = e.dim();
    let weight = |k: usize, block: usize| -> f64 { (block * nd..(block + 1) * nd).map(|r| e.vectors[(r, k)].norm_sqr()).sum() };
    let mut rest: Vec<usize> = (0..n).collect();
    rest.sort_by(|&a, &b| weight(b, 0).total_cmp(&weight(a, 0)));
    let mut rest = rest.split_off(nd);
    rest.sort_by(|&a, &b| weight(b, 1).total_cmp(&weight(a, 1)));
    let minus = rest.split_off(nd);
    let mut g0: Vec<f64> = rest.iter().map(|&k| e.values[k]).collect();
    let mut g1: Vec<f64> = minus.iter().map(|&k| e.values[k]).collect();
    g0.sort_by(f64::total_cmp);
    g1.sort_by(f64::total_cmp);
    Ok(g0.iter().zip(&g1).map(|(a, b)| (a - b).abs()).fold(f64::INFINITY, f64::min))
}

fn argmin(v: &[(f64, f64)]) -> usize {
    v.iter()
        .enumerate()
        .min_by(|x, y| x.1 .1.total_cmp(&y.1 .1))
        .map(|(k, _)| k)
        .unwrap()
}

fn golden_min(mut lo: f64, mut hi: f64, tol: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// Locates the `m_s = 0` / `m_s = -1` anticrossing of a manifold in `[b_lo, b_hi]`.
///
/// Levels of different symmetry (parity of `m_s + m_I`, permutation class of the
/// nuclei) cross freely, so the splitting is taken sector by sector. It is
/// Lipschitz in `b` with constant `2(γe + n γn)`, which lets a branch-and-bound
/// scan bracket the global minimum before a golden-section polish. When the
/// splitting closes (no hyperfine coupling) the coincidence of the two
/// electron-spin groups is located instead.
pub fn find_anticrossing(p: &SystemParams, m: Manifold, b_lo: f64, b_hi: f64) -> Result<AnticrossingReport> {
    if m == Manifold::Shelving {
        return Err(Error::InvalidParameter("shelving manifold has no electron spin".into()));
    }
    if !(b_lo.is_finite() && b_hi.is_finite() && b_lo < b_hi) || b_lo < 0.0 {
        return Err(Error::InvalidParameter(format!("invalid field interval [{b_lo}, {b_hi}]")));
    }
    let terms = ManifoldTerms::new(p, m)?;
    let nd = p.nuclear_dim();
    let low_block = if p.zero_field_splitting(m) - p.gamma_e * b_lo >= 0.0 { 1 } else { 2 };
    let sectors = symmetry_sectors(&terms, p.nuclei, low_block)?;
    let gap_at = |b: f64| sector_gap(&sectors, b).map(|g| g.0);

    let lipschitz = 2.0 * (p.gamma_e + p.nuclei as f64 * p.gamma_n) * 1.001;
    let scale = terms.at(b_hi)?.max_abs().max(1.0);
    let flat = 1e-9 * scale;
    let leaf = 1e-5_f64.min((b_hi - b_lo) / 16.0);

    let n0 = (((b_hi - b_lo) / 0.5).ceil() as usize).max(16);
    let h0 = (b_hi - b_lo) / n0 as f64;
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut intervals = Vec::new();
    let mut prev = (b_lo, gap_at(b_lo)?);
    samples.push(prev);
    for k in 1..=n0 {
        let b = if k == n0 { b_hi } else { b_lo + k as f64 * h0 };
        let cur = (b, gap_at(b)?);
        samples.push(cur);
        intervals.push((prev, cur));
        prev = cur;
    }
    let mut best = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    while let Some(((a, ga), (c, gc))) = intervals.pop() {
        if best <= flat {
            break;
        }
        let bound = 0.5 * (ga + gc - lipschitz * (c - a));
        if bound >= best - flat || c - a <= leaf {
            continue;
        }
        let mid = 0.5 * (a + c);
        let gm = gap_at(mid)?;
        samples.push((mid, gm));
        best = best.min(gm);
        intervals.push(((a, ga), (mid, gm)));
        intervals.push(((mid, gm), (c, gc)));
    }
    samples.sort_by(|x, y| x.0.total_cmp(&y.0));

    let k = argmin(&samples);
    let (lo, hi) = (samples[k.saturating_sub(1)].0, samples[(k + 1).min(samples.len() - 1)].0);
    let (mut b_star, mut gap) = golden_min(lo, hi, 1e-12 * (1.0 + hi), gap_at)?;
    if gap > samples[k].1 {
        (b_star, gap) = samples[k];
    }
    let mut branch = None;
    if gap <= flat {
        // levels cross without coupling: locate the coincidence of the two groups
        let near = lipschitz * leaf;
        let zero: Vec<f64> = samples.iter().filter(|s| s.1 <= near).map(|s| s.0).chain([b_star]).collect();
        let lo = (zero.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0).max(b_lo);
        let hi = (zero.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0).min(b_hi);
        let n = 200;
        let step = (hi - lo) / n as f64;
        let mut scan = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let b = lo + k as f64 * step;
            scan.push((b, matched_gap(&terms, nd, b)?));
        }
        let k = argmin(&scan);
        let (a, c) = (scan[k.saturating_sub(1)].0, scan[(k + 1).min(n)].0);
        b_star = golden_min(a, c, 1e-12 * (1.0 + c), |b| matched_gap(&terms, nd, b))?.0;
        gap = sector_gap(&sectors, b_star)?.0.max(0.0);
        branch = Some(EigenPair {
            lower: nd - 1,
            upper: nd,
            sector: "all".into(),
        });
    }
    let edge = 1e-3_f64.min((b_hi - b_lo) / 16.0);
    if b_star - b_lo < edge || b_hi - b_star < edge {
        return Err(Error::NoAnticrossing { lo: b_lo, hi: b_hi });
    }
    let branch = match branch {
        Some(b) => b,
        None => {
            let (_, k) = sector_gap(&sectors, b_star)?;
            let s = &sectors[k];
            let w = hermitian_eigvals(&(&s.fixed + &s.zeeman.scale_real(b_star)))?;
            let full = hermitian_eigvals(&terms.at(b_star)?)?;
            let locate = |x: f64| {
                (0..full.len())
                    .min_by(|&i, &j| (full[i] - x).abs().total_cmp(&(full[j] - x).abs()))
                    .unwrap()
            };
            let (lower, upper) = (locate(w[s.low - 1]), locate(w[s.low]));
            EigenPair {
                lower: lower.min(upper),
                upper: if lower == upper { upper + 1 } else { lower.max(upper) },
                sector: s.label.clone(),
            }
        }
    };
    Ok(AnticrossingReport { b_star, gap, branch })
}

fn nuclear_dim_of(h: &CMatrix) -> Result<usize> {
    let n = h.rows();
    if h.is_square() && [9, 27, 81].contains(&n) {
        Ok(n / 3)
    } else {
        Err(Error::DimensionMismatch(format!(
            "expected a 9x9, 27x27 or 81x81 manifold Hamiltonian, got {}x{}",
            h.rows(),
            h.cols()
        )))
    }
}

/// `(eigenvalue, brightness)` per eigenstate, ascending in energy. Brightness is
/// the weight on the `m_s = 0` basis states.
pub fn eigenstate_brightness(h_ground: &CMatrix) -> Result<Vec<(f64, f64)>> {
    let nd = nuclear_dim_of(h_ground)?;
    let e = hermitian_eig(h_ground)?;
    Ok(brightness_of(&e.vectors, nd).into_iter().zip(e.values).map(|(b, v)| (v, b)).collect())
}

/// Weight of every column of `vectors` on the `m_s = 0` block.
pub(crate) fn brightness_of(vectors: &CMatrix, nd: usize) -> Vec<f64> {
    (0..vectors.cols())
        .map(|k| (nd..2 * nd).map(|r| vectors[(r, k)].norm_sqr()).sum())
        .collect()
}

/// `m_s + m_I` of every basis state of a manifold with nuclear dimension `nd`.
pub fn total_quantum_numbers(nd: usize) -> Vec<i32> {
    (0..3 * nd)
        .map(|idx| {
            let ms = 1 - (idx / nd) as i32;
            let mut r = idx % nd;
            let mut mi = 0;
            let mut span = nd;
            while span > 1 {
                span /= 3;
                mi += 1 - (r / span) as i32;
                r %= span;
            }
            ms + mi
        })
        .collect()
}

/// Weight of one eigenstate in each total-quantum-number sector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorWeights {
    pub energy: f64,
    /// Sector labels `m_s + m_I`, ascending.
    pub sectors: Vec<i32>,
    pub weights: Vec<f64>,
}

impl SectorWeights {
    /// Sectors carrying more than `tol` weight.
    pub fn occupied(&self, tol: f64) -> Vec<i32> {
        self.sectors
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > tol)
            .map(|(&s, _)| s)
            .collect()
    }
}

/// Decomposes every eigenstate over the `m_s + m_I` sectors.
pub fn classify_quantum_number_mixing(h_ground: &CMatrix) -> Result<Vec<SectorWeights>> {
    let nd = nuclear_dim_of(h_ground)?;
    let labels = total_quantum_numbers(nd);
    let lo = *labels.iter().min().unwrap();
    let hi = *labels.iter().max().unwrap();
    let sectors: Vec<i32> = (lo..=hi).collect();
    let e = hermitian_eig(h_ground)?;
    Ok((0..e.dim())
        .map(|k| {
            let mut weights = vec![0.0; sectors.len()];
            for (r, &l) in labels.iter().enumerate() {
                weights[(l - lo) as usize] += e.vectors[(r, k)].norm_sqr();
            }
            SectorWeights {
                energy: e.values[k],
                sectors: sectors.clone(),
                weights,
            }
        })
        .collect())
}
