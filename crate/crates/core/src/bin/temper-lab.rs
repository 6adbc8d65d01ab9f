//! `temper-lab <kind> --config cfg.json --out dir [--seed N] [--svg]`
//!
//! Exit codes: 0 ok, 2 invalid config, 3 numerical failure, 4 step guard.
//! `TEMPER_LAB_THREADS` caps the worker pool; results do not depend on it.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use temper_lab::experiments::{default_params, parse_config, run_experiment, ExperimentConfig, ExperimentKind};
use temper_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "temper-lab", version, about = "Geometric-tempered Langevin experiments")]
struct Cli {
    /// sample, bounds-sweep, schedule-compare, probe, reproduce-fig2,
    /// reproduce-fig3, reproduce-pathviz, lower-bimodal or lower-unimodal.
    kind: String,
    /// JSON config; omitted means all defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also render an SVG next to each headline CSV.
    #[arg(long)]
    svg: bool,
    /// Print the kind's default parameters and exit.
    #[arg(long)]
    print_defaults: bool,
}

fn run(cli: Cli) -> Result<()> {
    let kind: ExperimentKind = cli.kind.parse()?;
    if cli.print_defaults {
        let doc = serde_json::json!({
            "schema_version": temper_lab::experiments::SCHEMA_VERSION,
            "kind": kind,
            "params": default_params(kind),
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
        return Ok(());
    }
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
            parse_config(&text, Some(kind))?
        }
        None => ExperimentConfig::new(kind, None),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Ok(v) = std::env::var("TEMPER_LAB_THREADS") {
        let n: usize = v.parse().map_err(|_| Error::Config {
            path: "TEMPER_LAB_THREADS".into(),
            message: format!("not a thread count: `{v}`"),
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config { path: "TEMPER_LAB_THREADS".into(), message: e.to_string() })?;
    }
    let manifest = run_experiment(&cfg, &cli.out, cli.svg)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    for f in &manifest.files {
        println!("{}  {}", f.sha256, cli.out.join(&f.path).display());
    }
    for (k, v) in &manifest.summary {
        println!("{k} = {v}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
