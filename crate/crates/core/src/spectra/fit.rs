//! Damped least squares for a sum of area-normalized Lorentzians on a
//! constant baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lorentz::lorentzian_grad;
use super::OdmrSpectrum;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: f64,
    pub fwhm: f64,
    pub area: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFit {
    /// Ascending in center frequency.
    pub peaks: Vec<Peak>,
    pub baseline: f64,
    pub residual_rms: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub n_peaks: usize,
    /// One width for all peaks.
    pub shared_width: bool,
    pub max_iterations: usize,
    pub rel_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_peaks: 7,
            shared_width: false,
            max_iterations: 500,
            rel_tol: 1e-10,
        }
    }
}

struct Layout {
    n: usize,
    shared: bool,
}

impl Layout {
    fn len(&self) -> usize {
        if self.shared {
            2 * self.n + 2
        } else {
            3 * self.n + 1
        }
    }

    fn center(&self, k: usize) -> usize {
        k
    }

    fn area(&self, k: usize) -> usize {
        self.n + k
    }

    fn width(&self, k: usize) -> usize {
        if self.shared {
            2 * self.n
        } else {
            2 * self.n + k
        }
    }

    fn baseline(&self) -> usize {
        self.len() - 1
    }

    fn pack(&self, peaks: &[Peak], baseline: f64) -> DVector<f64> {
        let mut x = DVector::zeros(self.len());
        for (k, p) in peaks.iter().enumerate() {
            x[self.center(k)] = p.center;
            x[self.area(k)] = p.area;
            x[self.width(k)] = p.fwhm;
        }
        if self.shared {
            x[self.width(0)] = peaks.iter().map(|p| p.fwhm).sum::<f64>() / self.n as f64;
        }
        x[self.baseline()] = baseline;
        x
    }

    fn unpack(&self, x: &DVector<f64>) -> (Vec<Peak>, f64) {
        let mut peaks: Vec<Peak> = (0..self.n)
            .map(|k| Peak {
                center: x[self.center(k)],
                fwhm: x[self.width(k)],
                area: x[self.area(k)],
            })
            .collect();
        peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
        (peaks, x[self.baseline()])
    }
}

fn residual_and_jacobian(s: &OdmrSpectrum, lay: &Layout, x: &DVector<f64>, jac: bool) -> (DVector<f64>, DMatrix<f64>) {
    let m = s.freq.len();
    let mut r = DVector::from_element(m, x[lay.baseline()]);
    let mut j = DMatrix::zeros(if jac { m } else { 0 }, lay.len());
    for (i, (&f, &y)) in s.freq.iter().zip(&s.contrast).enumerate() {
        for k in 0..lay.n {
            let (v, dc, dw, da) = lorentzian_grad(f, x[lay.center(k)], x[lay.width(k)], x[lay.area(k)]);
            r[i] += v;
            if jac {
                j[(i, lay.center(k))] += dc;
                j[(i, lay.width(k))] += dw;
                j[(i, lay.area(k))] += da;
            }
        }
        r[i] -= y;
        if jac {
            j[(i, lay.baseline())] = 1.0;
        }
    }
    (r, j)
}

fn moving_average(y: &[f64], half: usize) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(y.len());
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

/// Evenly spaced comb maximizing the summed signed depth of the smoothed
/// trace, common width `spacing / 3`, areas from the local depth.
pub fn initial_guess(s: &OdmrSpectrum, n_peaks: usize) -> Result<SpectrumFit> {
    if n_peaks == 0 || s.freq.len() < 3 {
        return Err(Error::Fit("need at least one peak and three samples".into()));
    }
    let smooth = moving_average(&s.contrast, 2);
    let edge = (smooth.len() / 20).max(1);
    let tails: Vec<f64> = smooth[..edge].iter().chain(&smooth[smooth.len() - edge..]).cloned().collect();
    let base = median(&tails);
    let dev: Vec<f64> = smooth.iter().map(|y| y - base).collect();
    let (imax, imin) = (0..dev.len()).fold((0, 0), |(a, b), i| {
        (if dev[i] > dev[a] { i } else { a }, if dev[i] < dev[b] { i } else { b })
    });
    let sign = if dev[imax].abs() >= dev[imin].abs() { 1.0 } else { -1.0 };
    let top = dev[imax].abs().max(dev[imin].abs());
    if !(top > 0.0) {
        return Err(Error::Fit("spectrum has no peaks".into()));
    }
    let (lo, hi) = (s.freq[0], s.freq[s.freq.len() - 1]);
    let interp = |f: f64| -> f64 {
        let k = s.freq.partition_point(|&x| x < f);
        if k == 0 {
            return dev[0];
        }
        if k >= s.freq.len() {
            return dev[dev.len() - 1];
        }
        let (f0, f1) = (s.freq[k - 1], s.freq[k]);
        let w = if f1 > f0 { (f - f0) / (f1 - f0) } else { 0.0 };
        dev[k - 1] * (1.0 - w) + dev[k] * w
    };
    let step = (hi - lo) / (s.freq.len() - 1) as f64;
    let (first, spacing) = if n_peaks == 1 {
        (s.freq[if sign > 0.0 { imax } else { imin }], 0.0)
    } else {
        let gaps = (n_peaks - 1) as f64;
        let (s_lo, s_hi) = ((hi - lo) / (3.0 * n_peaks as f64), (hi - lo) / gaps);
        let mut best = (f64::NEG_INFINITY, lo, s_hi);
        let mut sp = s_lo;
        while sp <= s_hi {
            let mut c = lo;
            while c + gaps * sp <= hi {
                let score: f64 = (0..n_peaks).map(|k| sign * interp(c + k as f64 * sp)).sum();
                if score > best.0 {
                    best = (score, c, sp);
                }
                c += step;
            }
            sp += step / 4.0;
        }
        (best.1, best.2)
    };
    let fwhm = if n_peaks > 1 { spacing / 3.0 } else { (s.freq[s.freq.len() - 1] - s.freq[0]) / 10.0 };
    let peaks = (0..n_peaks)
        .map(|k| {
            let center = first + k as f64 * spacing;
            let depth = interp(center);
            // a zero-area start makes the center direction degenerate
            let depth = if sign * depth > 0.05 * top { depth } else { sign * 0.05 * top };
            Peak {
                center,
                fwhm,
                area: depth * std::f64::consts::PI * fwhm / 2.0,
            }
        })
        .collect();
    Ok(SpectrumFit {
        peaks,
        baseline: base,
        residual_rms: f64::NAN,
        iterations: 0,
    })
}

/// Fits `opts.n_peaks` Lorentzians and a constant baseline by
/// Levenberg–Marquardt with an analytic Jacobian.
pub fn fit_lorentzians_with(s: &OdmrSpectrum, init: Option<&SpectrumFit>, opts: &FitOptions) -> Result<SpectrumFit> {
    let lay = Layout {
        n: opts.n_peaks,
        shared: opts.shared_width,
    };
    if opts.n_peaks == 0 {
        return Err(Error::Fit("need at least one peak".into()));
    }
    if s.freq.len() < lay.len() {
        return Err(Error::Fit(format!("{} points for {} parameters", s.freq.len(), lay.len())));
    }
    let start = match init {
        Some(f) if f.peaks.len() == opts.n_peaks => f.clone(),
        Some(f) => return Err(Error::Fit(format!("initial fit has {} peaks, expected {}", f.peaks.len(), opts.n_peaks))),
        None => initial_guess(s, opts.n_peaks)?,
    };
    let mut x = lay.pack(&start.peaks, start.baseline);
    let (mut r, mut j) = residual_and_jacobian(s, &lay, &x, true);
    let mut cost = r.norm_squared();
    let scale = s.contrast.iter().fold(0.0f64, |a, y| a.max(y.abs())).max(f64::MIN_POSITIVE);
    let floor = (1e-15 * scale).powi(2) * s.freq.len() as f64;
    let mut lambda = 1e-3;
    let rms = |c: f64| (c / s.freq.len() as f64).sqrt();
    for it in 1..=opts.max_iterations {
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &r;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for d in 0..a.nrows() {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 4.0;
                continue;
            };
            let trial = &x + &step;
            let widths_ok = (0..lay.n).all(|k| trial[lay.width(k)] > 0.0);
            if widths_ok {
                let (rt, _) = residual_and_jacobian(s, &lay, &trial, false);
                let ct = rt.norm_squared();
                if ct.is_finite() && ct <= cost {
                    let decrease = (cost - ct) / cost.max(f64::MIN_POSITIVE);
                    x = trial;
                    cost = ct;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    let done = decrease < opts.rel_tol || cost <= floor;
                    if done {
                        let (peaks, baseline) = lay.unpack(&x);
                        return Ok(SpectrumFit {
                            peaks,
                            baseline,
                            residual_rms: rms(cost),
                            iterations: it,
                        });
                    }
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no downhill step at any damping: stationary point
            let (peaks, baseline) = lay.unpack(&x);
            if cost <= floor || g.norm() <= 1e-12 * (1.0 + cost.sqrt()) * scale {
                return Ok(SpectrumFit {
                    peaks,
                    baseline,
                    residual_rms: rms(cost),
                    iterations: it,
                });
            }
            return Err(Error::Fit("damping exhausted without progress".into()));
        }
        (r, j) = residual_and_jacobian(s, &lay, &x, true);
    }
    let (peaks, baseline) = lay.unpack(&x);
    Err(Error::FitNonConvergence {
        iterations: opts.max_iterations,
        residual_rms: rms(cost),
        best: Box::new(SpectrumFit {
            peaks,
            baseline,
            residual_rms: rms(cost),
            iterations: opts.max_iterations,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::super::lorentz::lorentzian;
    use super::*;

    fn spectrum(peaks: &[(f64, f64, f64)], base: f64) -> OdmrSpectrum {
        let freq: Vec<f64> = (0..600).map(|k| k as f64 * 0.1).collect();
        let contrast = freq
            .iter()
            .map(|&f| base + peaks.iter().map(|&(c, w, a)| lorentzian(f, c, w, a)).sum::<f64>())
            .collect();
        OdmrSpectrum::new(freq, contrast).unwrap()
    }

    #[test]
    fn recovers_three_peaks() {
        let truth = [(15.0, 2.0, -1.0), (30.0, 3.0, -2.5), (45.0, 1.5, -0.7)];
        let s = spectrum(&truth, 0.2);
        let opts = FitOptions {
            n_peaks: 3,
            ..FitOptions::default()
        };
        let f = fit_lorentzians_with(&s, None, &opts).unwrap();
        for (p, t) in f.peaks.iter().zip(&truth) {
            assert!((p.center - t.0).abs() < 1e-7);
            assert!((p.fwhm - t.1).abs() < 1e-7);
            assert!((p.area - t.2).abs() < 1e-7 * t.2.abs());
        }
        assert!((f.baseline - 0.2).abs() < 1e-9);
        assert!(f.residual_rms < 1e-10);
    }

    #[test]
    fn shared_width_mode() {
        let truth = [(20.0, 2.0, 1.0), (40.0, 2.0, 3.0)];
        let s = spectrum(&truth, 0.0);
        let opts = FitOptions {
            n_peaks: 2,
            shared_width: true,
            ..FitOptions::default()
        };
        let f = fit_lorentzians_with(&s, None, &opts).unwrap();
        assert_eq!(f.peaks[0].fwhm, f.peaks[1].fwhm);
        assert!((f.peaks[1].area - 3.0).abs() < 1e-7);
    }

    #[test]
    fn degenerate_inputs() {
        let flat = spectrum(&[], 0.0);
        assert!(matches!(fit_lorentzians_with(&flat, None, &FitOptions::default()), Err(Error::Fit(_))));
        let tiny = OdmrSpectrum::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(fit_lorentzians_with(&tiny, None, &FitOptions::default()), Err(Error::Fit(_))));
    }

    #[test]
    fn iteration_cap_reports_best() {
        let s = spectrum(&[(15.0, 2.0, -1.0), (30.0, 3.0, -2.5), (45.0, 1.5, -0.7)], 0.0);
        let opts = FitOptions {
            n_peaks: 3,
            max_iterations: 1,
            ..FitOptions::default()
        };
        match fit_lorentzians_with(&s, None, &opts) {
            Err(Error::FitNonConvergence { best, .. }) => assert_eq!(best.peaks.len(), 3),
            other => panic!("{other:?}"),
        }
    }
}
