use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use lacsim::hamiltonian::{find_anticrossing, AnticrossingReport, Manifold, SystemParams};
use lacsim::lindblad::{build_block_hamiltonian, build_jump_operators, steady_state, DensityMatrix, SteadyStateMethod};
use lacsim::polarization::{field_grid, nuclear_populations, polarization, sweep_polarization};
use lacsim::spectra::{
    fit_lorentzians_with, lines_to_csv, odnmr_lines, synth_odmr, Branch, FitOptions, FitReport, OdmrSpectrum,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Provenance, RunConfig, Task};

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct ConfigEntry {
    pub key: String,
    pub value: String,
    pub provenance: Provenance,
}

#[derive(Debug, Serialize)]
pub struct FieldFlag {
    pub b_mt: f64,
    pub converged: bool,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub task: Task,
    pub backend: Option<SteadyStateMethod>,
    pub threads: usize,
    pub wall_time_s: f64,
    pub ok: bool,
    pub config: Vec<ConfigEntry>,
    pub convergence: Vec<FieldFlag>,
    pub files: Vec<FileEntry>,
}

/// Writes files via a temporary name and rename, recording checksums.
struct Outputs {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output dir {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let path = self.dir.join(name);
        let mut f = fs::File::create(&tmp).with_context(|| format!("writing {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, &path).with_context(|| format!("renaming to {}", path.display()))?;
        let digest = Sha256::digest(bytes);
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

fn spot_backend(cfg: &RunConfig) -> SteadyStateMethod {
    cfg.backend.unwrap_or(SteadyStateMethod::Integrate)
}

fn steady_at(p: &SystemParams, b: f64, method: SteadyStateMethod) -> Result<DensityMatrix> {
    let h = build_block_hamiltonian(p, b)?;
    let jumps = build_jump_operators(p)?;
    steady_state(&h, &jumps, method).with_context(|| format!("steady state at {b} mT ({method})"))
}

#[derive(Serialize)]
struct AnticrossFile {
    manifold: Manifold,
    b_lo: f64,
    b_hi: f64,
    #[serde(flatten)]
    report: AnticrossingReport,
}

#[derive(Serialize)]
struct OracleField {
    b_mt: f64,
    max_abs_diff: f64,
    pass: bool,
}

#[derive(Serialize)]
struct OracleFile {
    model_states: usize,
    tolerance: f64,
    fields: Vec<OracleField>,
    max_abs_diff: f64,
    pass: bool,
}

/// Spectrum from the steady-state populations at `spectrum.b`, with optional
/// seeded Gaussian noise.
fn synthesize(cfg: &RunConfig) -> Result<OdmrSpectrum> {
    let s = &cfg.spectrum;
    let rho = steady_at(&cfg.params, s.b, spot_backend(cfg))?;
    let pops = nuclear_populations(&rho)?;
    let mut spec = synth_odmr(&pops, s.f0, s.spacing, s.fwhm, s.scale)?;
    if s.noise > 0.0 {
        let top = spec.contrast.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let normal = Normal::new(0.0, s.noise * top)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for c in &mut spec.contrast {
            *c += normal.sample(&mut rng);
        }
    }
    Ok(spec)
}

pub fn run(task: Task, cfg: &RunConfig, out: &Path, threads: usize) -> Result<RunManifest> {
    let start = Instant::now();
    let mut outputs = Outputs::new(out)?;
    let mut convergence = Vec::new();
    let mut ok = true;
    let mut backend = cfg.backend;
    match task {
        Task::Anticross => {
            let a = &cfg.anticross;
            let report = find_anticrossing(&cfg.params, a.manifold, a.b_lo, a.b_hi)?;
            println!("b* = {:.6} mT, gap = {:.6e} MHz", report.b_star, report.gap);
            outputs.json(
                "anticross.json",
                &AnticrossFile {
                    manifold: a.manifold,
                    b_lo: a.b_lo,
                    b_hi: a.b_hi,
                    report,
                },
            )?;
        }
        Task::Sweep => {
            let method = cfg.backend.unwrap_or(SteadyStateMethod::Secular);
            backend = Some(method);
            let g = &cfg.grid;
            let curve = sweep_polarization(&cfg.params, &field_grid(g.b_lo, g.b_hi, g.step)?, method)?;
            for s in &curve.samples {
                convergence.push(FieldFlag {
                    b_mt: s.b,
                    converged: s.polarization.is_some(),
                });
            }
            if let Some((b, p)) = curve.peak() {
                println!("peak P = {p:.6} at {b} mT ({} failed fields)", curve.failures());
            }
            outputs.write("polarization.csv", curve.to_csv().as_bytes())?;
        }
        Task::Spectrum => {
            backend = Some(spot_backend(cfg));
            let spec = synthesize(cfg)?;
            outputs.write("spectrum.csv", spec.to_csv().as_bytes())?;
        }
        Task::Odnmr => {
            let method = spot_backend(cfg);
            backend = Some(method);
            let o = &cfg.odnmr;
            let rho = steady_at(&cfg.params, o.b, method)?;
            let branches = match o.branch {
                Some(b) => vec![b],
                None => vec![Branch::Ms0, Branch::MsMinus1],
            };
            let mut lines = Vec::new();
            for b in branches {
                lines.extend(odnmr_lines(&cfg.params, o.b, b, &rho, o.window)?);
            }
            println!("{} lines", lines.len());
            outputs.write("odnmr_lines.csv", lines_to_csv(&lines).as_bytes())?;
        }
        Task::Fit => {
            let spec = match &cfg.fit.input {
                Some(path) => OdmrSpectrum::from_csv(
                    &fs::read_to_string(path).with_context(|| format!("reading spectrum {}", path.display()))?,
                )?,
                None => {
                    backend = Some(spot_backend(cfg));
                    synthesize(cfg)?
                }
            };
            let opts = FitOptions {
                shared_width: cfg.fit.shared_width,
                ..FitOptions::default()
            };
            let fit = fit_lorentzians_with(&spec, None, &opts)?;
            let report = FitReport::new(&fit, cfg.fit.order)?;
            println!("P = {:.6}, residual rms = {:.3e}", report.polarization, report.residual_rms);
            outputs.json("fit_report.json", &report)?;
        }
        Task::Oracle => {
            let p = SystemParams {
                nuclei: 1,
                ..cfg.params.clone()
            };
            let tolerance = 1e-6;
            let mut fields = Vec::new();
            for b in [50.0, 124.0, 160.0] {
                let a = steady_at(&p, b, SteadyStateMethod::Integrate)?.populations();
                let n = steady_at(&p, b, SteadyStateMethod::Nullspace)?.populations();
                let d = a.iter().zip(&n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                let pol = polarization(&nuclear_populations(&steady_at(&p, b, SteadyStateMethod::Nullspace)?)?)?;
                println!("{b} mT: max |Δp| = {d:.3e}, P = {pol:.6}");
                fields.push(OracleField {
                    b_mt: b,
                    max_abs_diff: d,
                    pass: d < tolerance,
                });
            }
            let max_abs_diff = fields.iter().map(|f| f.max_abs_diff).fold(0.0, f64::max);
            let pass = fields.iter().all(|f| f.pass);
            ok = pass;
            outputs.json(
                "oracle.json",
                &OracleFile {
                    model_states: 21,
                    tolerance,
                    fields,
                    max_abs_diff,
                    pass,
                },
            )?;
        }
    }
    let mut manifest = RunManifest {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        task,
        backend,
        threads,
        wall_time_s: start.elapsed().as_secs_f64(),
        ok,
        config: cfg
            .echo()
            .into_iter()
            .map(|(key, value, provenance)| ConfigEntry { key, value, provenance })
            .collect(),
        convergence,
        files: Vec::new(),
    };
    manifest.files = std::mem::take(&mut outputs.files);
    outputs.json("manifest.json", &manifest)?;
    manifest.files.append(&mut outputs.files);
    if !manifest.ok {
        bail!("oracle comparison failed");
    }
    Ok(manifest)
}
