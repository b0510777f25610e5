//! ODMR line synthesis and fitting, and ODNMR transition lines.

mod fit;
mod lorentz;
mod odnmr;

pub use fit::{fit_lorentzians_with, initial_guess, FitOptions, Peak, SpectrumFit};
pub use lorentz::{lorentzian, lorentzian_grad, peak_height};
pub use odnmr::{frequency_spread, odnmr_lines, Branch, OdnmrLine};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::DickePopulations;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdmrSpectrum {
    pub freq: Vec<f64>,
    pub contrast: Vec<f64>,
}

impl OdmrSpectrum {
    pub fn new(freq: Vec<f64>, contrast: Vec<f64>) -> Result<Self> {
        if freq.len() != contrast.len() {
            return Err(Error::DimensionMismatch(format!("{} frequencies, {} contrasts", freq.len(), contrast.len())));
        }
        if freq.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("frequencies must be strictly increasing".into()));
        }
        if freq.iter().chain(&contrast).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("spectrum contains non-finite values".into()));
        }
        Ok(Self { freq, contrast })
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_MHz,contrast\n");
        for (f, c) in self.freq.iter().zip(&self.contrast) {
            let _ = writeln!(out, "{f:.11e},{c:.11e}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut freq = Vec::new();
        let mut contrast = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let mut next = || -> Result<f64> {
                cols.next()
                    .and_then(|c| c.trim().parse().ok())
                    .ok_or_else(|| Error::InvalidParameter(format!("line {}: expected two numbers: {line:?}", n + 1)))
            };
            freq.push(next()?);
            contrast.push(next()?);
        }
        Self::new(freq, contrast)
    }
}

/// Sum of `2n+1` Lorentzians at `f0 + m_I·spacing` with areas `scale·pops(m_I)`,
/// on a uniform grid over `f0 ± (n+1)·spacing`.
pub fn synth_odmr(d: &DickePopulations, f0: f64, spacing: f64, fwhm: f64, scale: f64) -> Result<OdmrSpectrum> {
    if !(spacing > 0.0 && fwhm > 0.0 && f0.is_finite() && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("spacing {spacing} and fwhm {fwhm} must be positive")));
    }
    let half = (d.nuclei() + 1) as f64 * spacing;
    let step = (fwhm / 8.0).min(2.0 * half / 400.0);
    let n = (2.0 * half / step).ceil() as usize;
    let freq: Vec<f64> = (0..=n).map(|k| f0 - half + k as f64 * 2.0 * half / n as f64).collect();
    let contrast = freq
        .iter()
        .map(|&f| {
            d.pops()
                .iter()
                .enumerate()
                .map(|(k, &p)| lorentzian(f, f0 + d.m_i(k) as f64 * spacing, fwhm, scale * p))
                .sum()
        })
        .collect();
    OdmrSpectrum::new(freq, contrast)
}

pub fn fit_lorentzians(s: &OdmrSpectrum, n_peaks: usize, init: Option<&SpectrumFit>) -> Result<SpectrumFit> {
    fit_lorentzians_with(
        s,
        init,
        &FitOptions {
            n_peaks,
            ..FitOptions::default()
        },
    )
}

/// How `m_I` maps onto peaks sorted by ascending center frequency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeakOrder {
    /// Lowest frequency peak is `m_I = -n`.
    Ascending,
    /// Lowest frequency peak is `m_I = +n`.
    Descending,
}

/// `Σ m_I A / (n Σ A)` over the fitted areas.
pub fn polarization_from_fit(f: &SpectrumFit, order: PeakOrder) -> Result<f64> {
    let areas: Vec<f64> = f.peaks.iter().map(|p| p.area).collect();
    polarization_from_areas(&areas, order)
}

pub fn polarization_from_areas(areas: &[f64], order: PeakOrder) -> Result<f64> {
    if areas.len() < 3 || areas.len() % 2 == 0 {
        return Err(Error::InvalidParameter(format!("need 2n+1 areas, got {}", areas.len())));
    }
    let total: f64 = areas.iter().sum();
    let top = areas.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if total == 0.0 || top == 0.0 {
        return Err(Error::ZeroArea);
    }
    if areas.iter().any(|a| a * total < 0.0 && a.abs() > 1e-9 * top) {
        return Err(Error::MixedAreaSigns);
    }
    let n = (areas.len() - 1) / 2;
    let m_i = |k: usize| match order {
        PeakOrder::Ascending => k as f64 - n as f64,
        PeakOrder::Descending => n as f64 - k as f64,
    };
    let s: f64 = areas.iter().enumerate().map(|(k, a)| m_i(k) * a).sum();
    Ok(s / (n as f64 * total))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastKind {
    PulsedOdmr,
    Odnmr,
}

/// `(signal - reference) / (signal + reference)`.
pub fn contrast(signal: f64, reference: f64, _kind: ContrastKind) -> Result<f64> {
    let den = signal + reference;
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((signal - reference) / den)
}

/// Fit report written as `fit_report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub peaks: Vec<Peak>,
    pub baseline: f64,
    pub residual_rms: f64,
    pub polarization: f64,
}

impl FitReport {
    pub fn new(f: &SpectrumFit, order: PeakOrder) -> Result<Self> {
        Ok(Self {
            peaks: f.peaks.clone(),
            baseline: f.baseline,
            residual_rms: f.residual_rms,
            polarization: polarization_from_fit(f, order)?,
        })
    }
}

pub fn lines_to_csv(lines: &[OdnmrLine]) -> String {
    let mut out = String::from("freq_MHz,amplitude,branch\n");
    for l in lines {
        let _ = writeln!(out, "{:.11e},{:.11e},{}", l.freq, l.amplitude, l.branch);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarization::polarization;
    use proptest::prelude::*;

    fn pops(v: &[f64]) -> DickePopulations {
        DickePopulations::new(v.to_vec()).unwrap()
    }

    fn numeric_area(s: &OdmrSpectrum) -> f64 {
        s.freq
            .windows(2)
            .zip(s.contrast.windows(2))
            .map(|(f, c)| 0.5 * (f[1] - f[0]) * (c[0] + c[1]))
            .sum()
    }

    #[test]
    fn synth_grid_and_centers() {
        let s = synth_odmr(&pops(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]), 2000.0, 47.0, 10.0, 1.0).unwrap();
        assert!((s.freq[0] - (2000.0 - 188.0)).abs() < 1e-9);
        assert!((s.freq[s.len() - 1] - 2188.0).abs() < 1e-9);
        let imax = (0..s.len()).max_by(|&a, &b| s.contrast[a].total_cmp(&s.contrast[b])).unwrap();
        assert!((s.freq[imax] - 2000.0).abs() < 1e-9);
        let f = fit_lorentzians(
            &synth_odmr(&pops(&[1.0, 3.0, 6.0, 7.0, 6.0, 3.0, 1.0]), 2000.0, 47.0, 12.0, -0.01).unwrap(),
            7,
            None,
        )
        .unwrap();
        let centers: Vec<f64> = f.peaks.iter().map(|p| p.center).collect();
        for (c, e) in centers.iter().zip([1859.0, 1906.0, 1953.0, 2000.0, 2047.0, 2094.0, 2141.0]) {
            assert!((c - e).abs() < 1e-6, "{centers:?}");
        }
        let areas: Vec<f64> = f.peaks.iter().map(|p| p.area / -0.01).collect();
        for (a, e) in areas.iter().zip([1.0, 3.0, 6.0, 7.0, 6.0, 3.0, 1.0]) {
            assert!((a - e).abs() < 1e-6 * e);
        }
    }

    #[test]
    fn single_population_area() {
        let s = synth_odmr(&pops(&[0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0]), 2000.0, 47.0, 5.0, 0.5).unwrap();
        assert!((numeric_area(&s) - 1.0).abs() < 0.01);
        assert!(synth_odmr(&pops(&[1.0, 1.0, 1.0]), 0.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn polarization_from_areas_examples() {
        let d = PeakOrder::Descending;
        assert!(polarization_from_areas(&[1.0; 7], d).unwrap().abs() < 1e-15);
        assert_eq!(polarization_from_areas(&[2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], d).unwrap(), 1.0);
        let p = polarization_from_areas(&[2.0, 3.0, 6.0, 7.0, 6.0, 3.0, 0.0], d).unwrap();
        assert!((p - 0.0741).abs() < 1e-4);
        assert!((polarization_from_areas(&[0.0, 3.0, 6.0, 7.0, 6.0, 3.0, 2.0], PeakOrder::Ascending).unwrap() - p).abs() < 1e-15);
        assert!(matches!(polarization_from_areas(&[0.0; 7], d), Err(Error::ZeroArea)));
        assert!(matches!(polarization_from_areas(&[1.0, -1.0, 1.0], d), Err(Error::MixedAreaSigns)));
        assert!((polarization_from_areas(&[-1.0, 0.0, 0.0], d).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn contrast_examples() {
        let k = ContrastKind::PulsedOdmr;
        assert_eq!(contrast(1.0, 1.0, k).unwrap(), 0.0);
        assert!((contrast(0.9, 1.1, ContrastKind::Odnmr).unwrap() + 0.1).abs() < 1e-15);
        assert_eq!(contrast(2.0, 0.0, k).unwrap(), 1.0);
        assert!(matches!(contrast(1.0, -1.0, k), Err(Error::ZeroDenominator)));
    }

    #[test]
    fn csv_round_trip() {
        let s = synth_odmr(&pops(&[1.0, 2.0, 3.0]), 100.0, 10.0, 2.0, 1.0).unwrap();
        let back = OdmrSpectrum::from_csv(&s.to_csv()).unwrap();
        assert_eq!(back.len(), s.len());
        for (a, b) in back.contrast.iter().zip(&s.contrast) {
            assert!((a - b).abs() <= 1e-11 * b.abs());
        }
        assert!(OdmrSpectrum::from_csv("freq_MHz,contrast\n1,x\n").is_err());
        assert!(OdmrSpectrum::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn noise_free_round_trip(v in prop::collection::vec(0.1f64..1.0, 7)) {
            let d = pops(&v);
            let s = synth_odmr(&d, 2500.0, 47.0, 14.0, -0.02).unwrap();
            let f = fit_lorentzians(&s, 7, None).unwrap();
            let top = s.contrast.iter().fold(0.0f64, |a, c| a.max(c.abs()));
            prop_assert!(f.residual_rms < 1e-8 * top);
            let p = polarization_from_fit(&f, PeakOrder::Ascending).unwrap();
            prop_assert!((p - polarization(&d).unwrap()).abs() < 1e-4);
        }
    }
}
