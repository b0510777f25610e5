use serde::{Deserialize, Serialize};

use super::generator::Generator;
use super::implicit::ImplicitSolver;
use super::{DensityMatrix, JumpOperator};
use crate::error::{Error, Result};
use crate::{CMatrix, C64};

/// Time-stepping scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stepper {
    /// Explicit for mildly stiff problems or dense jump operators, implicit otherwise.
    Auto,
    /// Dormand-Prince 5(4).
    Explicit,
    /// L-stable two-stage SDIRK with step-doubling error control and
    /// Schur-Sylvester linear solves.
    Implicit,
}

#[derive(Clone, Copy, Debug)]
pub struct EvolveOptions {
    /// Local error per unit time (Frobenius norm, 1/µs).
    pub tol: f64,
    pub stepper: Stepper,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            stepper: Stepper::Auto,
            max_steps: 200_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub time: f64,
    /// `‖dρ/dt‖_F` at the returned state.
    pub residual: f64,
    pub implicit: bool,
    /// `|tr ρ - 1|` of the raw integrator output.
    pub trace_defect: f64,
    /// `max |ρ - ρ†|` of the raw integrator output.
    pub hermitian_defect: f64,
}

/// Integrates the master equation from `rho0` over `t_final` µs.
pub fn evolve(h: &CMatrix, jumps: &[JumpOperator], rho0: &DensityMatrix, t_final: f64, tol: f64) -> Result<DensityMatrix> {
    let opts = EvolveOptions {
        tol,
        ..EvolveOptions::default()
    };
    evolve_with(h, jumps, rho0, t_final, &opts).map(|(rho, _)| rho)
}

pub fn evolve_with(
    h: &CMatrix,
    jumps: &[JumpOperator],
    rho0: &DensityMatrix,
    t_final: f64,
    opts: &EvolveOptions,
) -> Result<(DensityMatrix, EvolveStats)> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidParameter(format!("t_final must be positive, got {t_final}")));
    }
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if rho0.dim() != h.rows() {
        return Err(Error::DimensionMismatch(format!(
            "state of dimension {} with a {}-dimensional Hamiltonian",
            rho0.dim(),
            h.rows()
        )));
    }
    let gen = Generator::new(h, jumps)?;
    let (y, mut stats) = integrate(&gen, rho0.matrix().clone(), Some(t_final), None, opts)?;
    stats.trace_defect = (y.trace() - C64::new(1.0, 0.0)).norm();
    stats.hermitian_defect = y.hermitian_defect();
    Ok((DensityMatrix::new(y)?, stats))
}

/// Crude bound on the generator's spectral radius.
fn stiffness(gen: &Generator) -> f64 {
    let hmax = (0..gen.dim)
        .map(|i| gen.h.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let out = gen.out_rates().into_iter().fold(0.0, f64::max);
    2.0 * hmax + out
}

/// Runs to `t_final` or, with `stop = Some(r)`, until `‖L ρ‖_F < r ‖ρ‖_F`.
pub(crate) fn integrate(
    gen: &Generator,
    y0: CMatrix,
    t_final: Option<f64>,
    stop: Option<f64>,
    opts: &EvolveOptions,
) -> Result<(CMatrix, EvolveStats)> {
    let sigma = stiffness(gen);
    let implicit = match opts.stepper {
        Stepper::Explicit => false,
        Stepper::Implicit => true,
        Stepper::Auto => gen.dense.is_empty() && sigma * t_final.unwrap_or(f64::INFINITY) > 200.0,
    };
    if implicit {
        let solver = ImplicitSolver::new(gen)?;
        sdirk(gen, solver, y0, t_final, stop, opts, sigma)
    } else {
        let run = dopri(gen, y0.clone(), t_final, stop, opts, sigma);
        match run {
            Err(Error::StiffnessFailure { .. }) if opts.stepper == Stepper::Auto && gen.dense.is_empty() => {
                let solver = ImplicitSolver::new(gen)?;
                sdirk(gen, solver, y0, t_final, stop, opts, sigma)
            }
            other => other,
        }
    }
}

fn axpy(y: &mut CMatrix, a: f64, x: &CMatrix) {
    for (u, v) in y.data_mut().iter_mut().zip(x.data()) {
        *u += *v * a;
    }
}

fn hermitize(y: &mut CMatrix) {
    let n = y.rows();
    for i in 0..n {
        y[(i, i)].im = 0.0;
        for j in i + 1..n {
            let m = (y[(i, j)] + y[(j, i)].conj()) * 0.5;
            y[(i, j)] = m;
            y[(j, i)] = m.conj();
        }
    }
}

fn underflow(t: f64, step: f64, err: f64) -> Error {
    Error::StiffnessFailure { t, step, err }
}

fn done(t: f64, t_final: Option<f64>) -> bool {
    t_final.is_some_and(|tf| t >= tf)
}

const GAMMA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

fn quantize(tau: f64) -> f64 {
    2f64.powi(tau.log2().floor() as i32)
}

/// One step of the two-stage L-stable SDIRK scheme; `ly = L y`.
fn sdirk_step(gen: &Generator, solver: &mut ImplicitSolver<'_>, y: &CMatrix, ly: &CMatrix, h: f64) -> Result<CMatrix> {
    let c = GAMMA * h;
    let k1 = solver.solve(ly, c)?;
    let mut y1 = y.clone();
    axpy(&mut y1, h * (1.0 - GAMMA), &k1);
    let k2 = solver.solve(&gen.apply(&y1), c)?;
    let mut out = y.clone();
    axpy(&mut out, h * (1.0 - GAMMA), &k1);
    axpy(&mut out, h * GAMMA, &k2);
    Ok(out)
}

fn sdirk(
    gen: &Generator,
    mut solver: ImplicitSolver<'_>,
    mut y: CMatrix,
    t_final: Option<f64>,
    stop: Option<f64>,
    opts: &EvolveOptions,
    sigma: f64,
) -> Result<(CMatrix, EvolveStats)> {
    let mut stats = EvolveStats {
        implicit: true,
        ..EvolveStats::default()
    };
    let mut t = 0.0;
    let mut tau = quantize(1e-2 / sigma.max(1e-6));
    let mut ly = gen.apply(&y);
    loop {
        stats.residual = ly.frobenius_norm();
        if let Some(r) = stop {
            if stats.residual < r * y.frobenius_norm() {
                break;
            }
        }
        if done(t, t_final) {
            break;
        }
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::SteadyStateNotReached(format!(
                "step budget of {} exhausted at t = {t:.4e} us (residual {:.3e})",
                opts.max_steps, stats.residual
            )));
        }
        let h = match t_final {
            Some(tf) => tau.min(tf - t),
            None => tau,
        };
        // step doubling: one step of h against two of h/2
        let big = sdirk_step(gen, &mut solver, &y, &ly, h)?;
        let mid = sdirk_step(gen, &mut solver, &y, &ly, 0.5 * h)?;
        let small = sdirk_step(gen, &mut solver, &mid, &gen.apply(&mid), 0.5 * h)?;
        let e = (&small - &big).frobenius_norm() / (3.0 * h);
        if e <= opts.tol {
            y = small;
            hermitize(&mut y);
            t += h;
            stats.accepted += 1;
            ly = gen.apply(&y);
        } else {
            stats.rejected += 1;
        }
        let grow = if e > 0.0 { (0.9 * (opts.tol / e).sqrt()).clamp(0.2, 4.0) } else { 4.0 };
        tau = if e <= opts.tol {
            quantize(h * grow).max(quantize(h))
        } else {
            quantize(h * grow)
        };
        if tau < 1e-14 * t.max(1.0) {
            return Err(underflow(t, tau, e));
        }
    }
    stats.time = t;
    Ok((y, stats))
}

/// Relaxes towards the stationary state with L-stable implicit steps whose
/// length grows geometrically, without transient error control. The fixed
/// point of the step map is the exact null vector of the generator; stops
/// once `‖L ρ‖_F < stop ‖ρ‖_F`.
pub(crate) fn relax(gen: &Generator, mut y: CMatrix, stop: f64, max_steps: usize) -> Result<(CMatrix, EvolveStats)> {
    let mut solver = ImplicitSolver::new(gen)?;
    let mut stats = EvolveStats {
        implicit: true,
        ..EvolveStats::default()
    };
    let sigma = stiffness(gen);
    let mut tau = quantize(1e-2 / sigma.max(1e-6));
    let cap = 2f64.powi(20);
    let mut ly = gen.apply(&y);
    loop {
        stats.residual = ly.frobenius_norm();
        if stats.residual < stop * y.frobenius_norm() {
            break;
        }
        if stats.accepted >= max_steps {
            return Err(Error::SteadyStateNotReached(format!(
                "{max_steps} relaxation steps reached t = {:.4e} us (residual {:.3e})",
                stats.time, stats.residual
            )));
        }
        y = sdirk_step(gen, &mut solver, &y, &ly, tau)?;
        hermitize(&mut y);
        let tr = y.trace().re;
        y = y.scale_real(1.0 / tr);
        ly = gen.apply(&y);
        stats.accepted += 1;
        stats.time += tau;
        tau = (2.0 * tau).min(cap);
    }
    Ok((y, stats))
}

// Dormand-Prince 5(4) tableau
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn dopri(
    gen: &Generator,
    mut y: CMatrix,
    t_final: Option<f64>,
    stop: Option<f64>,
    opts: &EvolveOptions,
    sigma: f64,
) -> Result<(CMatrix, EvolveStats)> {
    let mut stats = EvolveStats::default();
    let mut t = 0.0;
    let mut tau = if sigma > 0.0 { 0.5 / sigma } else { t_final.unwrap_or(1.0) };
    let mut k0 = gen.apply(&y);
    loop {
        stats.residual = k0.frobenius_norm();
        if let Some(r) = stop {
            if stats.residual < r * y.frobenius_norm() {
                break;
            }
        }
        if done(t, t_final) {
            break;
        }
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(underflow(t, tau, f64::NAN));
        }
        let h = match t_final {
            Some(tf) => tau.min(tf - t),
            None => tau,
        };
        let mut k: Vec<CMatrix> = vec![k0.clone()];
        let mut ys = y.clone();
        for (s, row) in A.iter().enumerate().skip(1) {
            ys = y.clone();
            for (j, &a) in row.iter().enumerate().take(s) {
                if a != 0.0 {
                    axpy(&mut ys, h * a, &k[j]);
                }
            }
            // the last stage is evaluated at the 5th-order solution
            k.push(gen.apply(&ys));
        }
        let mut err = CMatrix::zeros(y.rows(), y.cols());
        for (j, &e) in E.iter().enumerate() {
            if e != 0.0 {
                axpy(&mut err, h * e, &k[j]);
            }
        }
        let e = err.frobenius_norm() / h;
        if e <= opts.tol {
            y = ys;
            hermitize(&mut y);
            t += h;
            stats.accepted += 1;
            k0 = gen.apply(&y);
        } else {
            stats.rejected += 1;
        }
        let grow = if e > 0.0 { (0.9 * (opts.tol / e).powf(0.25)).clamp(0.2, 5.0) } else { 5.0 };
        tau = h * grow;
        if tau < 1e-14 * t.max(1.0) {
            return Err(underflow(t, tau, e));
        }
    }
    stats.time = t;
    Ok((y, stats))
}

#[cfg(test)]
mod tests {
    use super::super::JumpKind;
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn identity_dynamics() {
        let h = CMatrix::zeros(3, 3);
        let rho = DensityMatrix::diagonal(&[0.2, 0.3, 0.5]).unwrap();
        let out = evolve(&h, &[], &rho, 5.0, 1e-8).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn amplitude_damping_both_steppers() {
        let h = CMatrix::zeros(2, 2);
        let jumps = [JumpOperator::transition(2, 1, 0, 0.8, JumpKind::Custom).unwrap()];
        let rho = DensityMatrix::basis_state(2, 0).unwrap();
        let t = 0.6;
        let exact = (-TAU * 0.8 * t).exp();
        for stepper in [Stepper::Explicit, Stepper::Implicit] {
            let opts = EvolveOptions {
                tol: 1e-7,
                stepper,
                ..EvolveOptions::default()
            };
            let (out, _) = evolve_with(&h, &jumps, &rho, t, &opts).unwrap();
            let got = out.matrix()[(0, 0)].re;
            assert!((got - exact).abs() < 1e-6, "{stepper:?}: {got} vs {exact}");
        }
    }

    #[test]
    fn rabi_oscillation_implicit_matches_explicit() {
        let h = CMatrix::from_real_rows(&[&[0.0, 0.5], &[0.5, 0.2]]);
        let jumps = [JumpOperator::transition(2, 1, 0, 0.05, JumpKind::Custom).unwrap()];
        let rho = DensityMatrix::basis_state(2, 0).unwrap();
        let run = |stepper| {
            let opts = EvolveOptions {
                tol: 1e-8,
                stepper,
                ..EvolveOptions::default()
            };
            evolve_with(&h, &jumps, &rho, 1.7, &opts).unwrap().0
        };
        let a = run(Stepper::Explicit);
        let b = run(Stepper::Implicit);
        assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-5);
    }
}
