mod config;
mod run;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use lacsim::lindblad::SteadyStateMethod;

use config::{RunConfig, Task};

/// Level-anticrossing nuclear polarization toolkit.
#[derive(Parser, Debug)]
#[command(name = "lacsim", version)]
struct Cli {
    /// Task to run; overrides `task` in the config.
    #[arg(value_enum)]
    task: Option<Task>,
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Steady-state backend (integrate, nullspace, secular).
    #[arg(long)]
    backend: Option<SteadyStateMethod>,
    /// Worker threads; falls back to LACSIM_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn threads(cli: Option<usize>) -> Result<usize> {
    if let Some(n) = cli {
        return Ok(n);
    }
    match std::env::var("LACSIM_THREADS") {
        Ok(v) => v.trim().parse().with_context(|| format!("LACSIM_THREADS={v:?}")),
        Err(_) => Ok(0),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.backend.is_some() {
        cfg.backend = cli.backend;
    }
    let task = cli.task.or(cfg.task).context("no task given on the command line or in the config")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads(cli.threads)?)
        .build()?;
    let n = pool.current_num_threads();
    let manifest = pool.install(|| run::run(task, &cfg, &cli.out, n))?;
    for f in &manifest.files {
        println!("{}  {}", f.sha256, cli.out.join(&f.name).display());
    }
    Ok(())
}
