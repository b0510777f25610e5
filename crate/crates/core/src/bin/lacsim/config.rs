//! Flat `key = value` run configuration with dotted namespaces.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use lacsim::hamiltonian::{Manifold, SystemParams};
use lacsim::lindblad::SteadyStateMethod;
use lacsim::spectra::{Branch, PeakOrder};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    TableS1,
    Assumption,
    Default,
    Config,
}

/// Every accepted key with the provenance of its built-in default.
const KEYS: &[(&str, Provenance)] = &[
    ("params.d_gs", Provenance::Assumption),
    ("params.d_es", Provenance::Assumption),
    ("params.gamma_e", Provenance::Assumption),
    ("params.gamma_n", Provenance::Assumption),
    ("params.q", Provenance::Assumption),
    ("params.a_gs.x", Provenance::TableS1),
    ("params.a_gs.y", Provenance::TableS1),
    ("params.a_gs.z", Provenance::TableS1),
    ("params.a_es.x", Provenance::TableS1),
    ("params.a_es.y", Provenance::TableS1),
    ("params.a_es.z", Provenance::TableS1),
    ("params.rates.gamma_r", Provenance::TableS1),
    ("params.rates.gamma_0", Provenance::TableS1),
    ("params.rates.gamma_1", Provenance::TableS1),
    ("params.rates.kappa_0", Provenance::TableS1),
    ("params.rates.kappa_1", Provenance::TableS1),
    ("params.rates.gamma_mix", Provenance::TableS1),
    ("params.pump_rate", Provenance::Assumption),
    ("params.nuclei", Provenance::Assumption),
    ("task", Provenance::Default),
    ("backend", Provenance::Default),
    ("seed", Provenance::Default),
    ("grid.b_lo", Provenance::Default),
    ("grid.b_hi", Provenance::Default),
    ("grid.step", Provenance::Default),
    ("anticross.manifold", Provenance::Default),
    ("anticross.b_lo", Provenance::Default),
    ("anticross.b_hi", Provenance::Default),
    ("odnmr.b", Provenance::Default),
    ("odnmr.branch", Provenance::Default),
    ("odnmr.window_lo", Provenance::Default),
    ("odnmr.window_hi", Provenance::Default),
    ("spectrum.b", Provenance::Default),
    ("spectrum.f0", Provenance::Default),
    ("spectrum.spacing", Provenance::Default),
    ("spectrum.fwhm", Provenance::Default),
    ("spectrum.scale", Provenance::Default),
    ("spectrum.noise", Provenance::Default),
    ("fit.input", Provenance::Default),
    ("fit.shared_width", Provenance::Default),
    ("fit.order", Provenance::Default),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Anticross,
    Sweep,
    Spectrum,
    Odnmr,
    Fit,
    Oracle,
}

impl std::str::FromStr for Task {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        <Task as clap::ValueEnum>::from_str(s, false).map_err(|_| anyhow!("unknown task {s:?}"))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Grid {
    pub b_lo: f64,
    pub b_hi: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnticrossSettings {
    pub manifold: Manifold,
    pub b_lo: f64,
    pub b_hi: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OdnmrSettings {
    pub b: f64,
    /// `None` for both branches.
    pub branch: Option<Branch>,
    pub window: (f64, f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSettings {
    pub b: f64,
    pub f0: f64,
    pub spacing: f64,
    pub fwhm: f64,
    pub scale: f64,
    /// Gaussian noise standard deviation as a fraction of the largest |contrast|.
    pub noise: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitSettings {
    pub input: Option<PathBuf>,
    pub shared_width: bool,
    pub order: PeakOrder,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub params: SystemParams,
    pub task: Option<Task>,
    /// `None` picks secular for sweeps and integrate for spot solves.
    pub backend: Option<SteadyStateMethod>,
    pub seed: u64,
    pub grid: Grid,
    pub anticross: AnticrossSettings,
    pub odnmr: OdnmrSettings,
    pub spectrum: SpectrumSettings,
    pub fit: FitSettings,
    /// Provenance of every key.
    pub provenance: BTreeMap<String, Provenance>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: SystemParams::default(),
            task: None,
            backend: None,
            seed: 0,
            grid: Grid {
                b_lo: 28.0,
                b_hi: 200.0,
                step: 2.0,
            },
            anticross: AnticrossSettings {
                manifold: Manifold::Ground,
                b_lo: 100.0,
                b_hi: 150.0,
            },
            odnmr: OdnmrSettings {
                b: 80.0,
                branch: None,
                window: (0.01, 50.0),
            },
            spectrum: SpectrumSettings {
                b: 124.0,
                f0: 2000.0,
                spacing: 47.0,
                fwhm: 15.0,
                scale: -0.02,
                noise: 0.0,
            },
            fit: FitSettings {
                input: None,
                shared_width: false,
                order: PeakOrder::Ascending,
            },
            provenance: KEYS.iter().map(|(k, p)| (k.to_string(), *p)).collect(),
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| anyhow!("line {line}: {key}: expected a number, got {value:?}"))
}

fn boolean(key: &str, value: &str, line: usize) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => bail!("line {line}: {key}: expected true or false, got {value:?}"),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line}: expected key = value, got {body:?}"))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _)| *k == key) {
                bail!("unknown key: {key}");
            }
            if let Some(first) = seen.insert(key.to_string(), line) {
                bail!("line {line}: {key} already set on line {first}");
            }
            cfg.set(key, value, line)?;
            cfg.provenance.insert(key.to_string(), Provenance::Config);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    fn set(&mut self, key: &str, v: &str, line: usize) -> Result<()> {
        let p = &mut self.params;
        let r = &mut p.rates;
        match key {
            "params.d_gs" => p.d_gs = number(key, v, line)?,
            "params.d_es" => p.d_es = number(key, v, line)?,
            "params.gamma_e" => p.gamma_e = number(key, v, line)?,
            "params.gamma_n" => p.gamma_n = number(key, v, line)?,
            "params.q" => p.q = number(key, v, line)?,
            "params.a_gs.x" => p.a_gs.x = number(key, v, line)?,
            "params.a_gs.y" => p.a_gs.y = number(key, v, line)?,
            "params.a_gs.z" => p.a_gs.z = number(key, v, line)?,
            "params.a_es.x" => p.a_es.x = number(key, v, line)?,
            "params.a_es.y" => p.a_es.y = number(key, v, line)?,
            "params.a_es.z" => p.a_es.z = number(key, v, line)?,
            "params.rates.gamma_r" => r.gamma_r = number(key, v, line)?,
            "params.rates.gamma_0" => r.gamma_0 = number(key, v, line)?,
            "params.rates.gamma_1" => r.gamma_1 = number(key, v, line)?,
            "params.rates.kappa_0" => r.kappa_0 = number(key, v, line)?,
            "params.rates.kappa_1" => r.kappa_1 = number(key, v, line)?,
            "params.rates.gamma_mix" => r.gamma_mix = number(key, v, line)?,
            "params.pump_rate" => p.pump_rate = number(key, v, line)?,
            "params.nuclei" => p.nuclei = number(key, v, line)?,
            "task" => self.task = Some(v.parse().with_context(|| format!("line {line}"))?),
            "backend" => self.backend = Some(v.parse().with_context(|| format!("line {line}"))?),
            "seed" => self.seed = number(key, v, line)?,
            "grid.b_lo" => self.grid.b_lo = number(key, v, line)?,
            "grid.b_hi" => self.grid.b_hi = number(key, v, line)?,
            "grid.step" => self.grid.step = number(key, v, line)?,
            "anticross.manifold" => {
                self.anticross.manifold = match v {
                    "ground" => Manifold::Ground,
                    "excited" => Manifold::Excited,
                    _ => bail!("line {line}: {key}: expected ground or excited, got {v:?}"),
                }
            }
            "anticross.b_lo" => self.anticross.b_lo = number(key, v, line)?,
            "anticross.b_hi" => self.anticross.b_hi = number(key, v, line)?,
            "odnmr.b" => self.odnmr.b = number(key, v, line)?,
            "odnmr.branch" => {
                self.odnmr.branch = match v {
                    "both" => None,
                    _ => Some(v.parse().with_context(|| format!("line {line}"))?),
                }
            }
            "odnmr.window_lo" => self.odnmr.window.0 = number(key, v, line)?,
            "odnmr.window_hi" => self.odnmr.window.1 = number(key, v, line)?,
            "spectrum.b" => self.spectrum.b = number(key, v, line)?,
            "spectrum.f0" => self.spectrum.f0 = number(key, v, line)?,
            "spectrum.spacing" => self.spectrum.spacing = number(key, v, line)?,
            "spectrum.fwhm" => self.spectrum.fwhm = number(key, v, line)?,
            "spectrum.scale" => self.spectrum.scale = number(key, v, line)?,
            "spectrum.noise" => self.spectrum.noise = number(key, v, line)?,
            "fit.input" => self.fit.input = Some(PathBuf::from(v)),
            "fit.shared_width" => self.fit.shared_width = boolean(key, v, line)?,
            "fit.order" => {
                self.fit.order = match v {
                    "ascending" => PeakOrder::Ascending,
                    "descending" => PeakOrder::Descending,
                    _ => bail!("line {line}: {key}: expected ascending or descending, got {v:?}"),
                }
            }
            _ => bail!("unknown key: {key}"),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let g = &self.grid;
        if !(g.step > 0.0 && g.b_lo < g.b_hi && g.b_lo >= 0.0) {
            bail!("grid needs 0 <= b_lo < b_hi and step > 0");
        }
        if self.spectrum.noise < 0.0 {
            bail!("spectrum.noise must be non-negative");
        }
        Ok(())
    }

    /// `(key, value, provenance)` for every key, in declaration order.
    pub fn echo(&self) -> Vec<(String, String, Provenance)> {
        let p = &self.params;
        let r = &p.rates;
        let backend = self.backend.map(|b| b.to_string()).unwrap_or_else(|| "auto".into());
        let task = self
            .task
            .map(|t| format!("{t:?}").to_lowercase())
            .unwrap_or_else(|| "none".into());
        let branch = self.odnmr.branch.map(|b| b.to_string()).unwrap_or_else(|| "both".into());
        let values = [
            p.d_gs.to_string(),
            p.d_es.to_string(),
            p.gamma_e.to_string(),
            p.gamma_n.to_string(),
            p.q.to_string(),
            p.a_gs.x.to_string(),
            p.a_gs.y.to_string(),
            p.a_gs.z.to_string(),
            p.a_es.x.to_string(),
            p.a_es.y.to_string(),
            p.a_es.z.to_string(),
            r.gamma_r.to_string(),
            r.gamma_0.to_string(),
            r.gamma_1.to_string(),
            r.kappa_0.to_string(),
            r.kappa_1.to_string(),
            r.gamma_mix.to_string(),
            p.pump_rate.to_string(),
            p.nuclei.to_string(),
            task,
            backend,
            self.seed.to_string(),
            self.grid.b_lo.to_string(),
            self.grid.b_hi.to_string(),
            self.grid.step.to_string(),
            format!("{:?}", self.anticross.manifold).to_lowercase(),
            self.anticross.b_lo.to_string(),
            self.anticross.b_hi.to_string(),
            self.odnmr.b.to_string(),
            branch,
            self.odnmr.window.0.to_string(),
            self.odnmr.window.1.to_string(),
            self.spectrum.b.to_string(),
            self.spectrum.f0.to_string(),
            self.spectrum.spacing.to_string(),
            self.spectrum.fwhm.to_string(),
            self.spectrum.scale.to_string(),
            self.spectrum.noise.to_string(),
            self.fit.input.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            self.fit.shared_width.to_string(),
            format!("{:?}", self.fit.order).to_lowercase(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|((k, _), v)| (k.to_string(), v, self.provenance[*k]))
            .collect()
    }
}
