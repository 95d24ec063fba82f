use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use spdelab::experiments::{self, ExperimentConfig};
use spdelab::props::{self, NoiseValidateConfig, PropsConfig, SUITES};
use spdelab::{Error, Result};

#[derive(Parser)]
#[command(name = "spdelab", version, about = "Pseudo-spectral lab for SPDEs with divergence-free transport noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Covariance, divergence, orthogonality, isotropy and kappa checks of the noise.
    NoiseValidate(Common),
    /// Monte Carlo ell-sweep and log-log rate fit.
    Rate(Common),
    /// Deterministic property suites.
    Props {
        /// Suite name, or `all`.
        selector: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 means one per logical core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Validate and print the resolved configuration without running.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: serde_json::Value,
    seed: u64,
    workers: usize,
    started: String,
    finished: String,
    artifacts: Vec<String>,
    code_version: &'static str,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn read_config(path: &Option<PathBuf>) -> Result<String> {
    let path = path.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

struct Run<'a> {
    command: &'a str,
    common: &'a Common,
    started: String,
    artifacts: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    fn new(command: &'a str, common: &'a Common) -> Result<Self> {
        std::fs::create_dir_all(&common.out)?;
        Ok(Self { command, common, started: now(), artifacts: Vec::new() })
    }

    fn finish<C: Serialize>(self, config: &C, seed: u64, workers: usize) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            config: serde_json::to_value(config)?,
            seed,
            workers,
            started: self.started,
            finished: now(),
            artifacts: self.artifacts.iter().map(|p| p.display().to_string()).collect(),
            code_version: env!("CARGO_PKG_VERSION"),
        };
        write_json(&self.common.out.join("manifest.json"), &manifest)
    }
}

fn noise_validate(common: &Common) -> Result<bool> {
    let mut cfg = NoiseValidateConfig::from_json(&read_config(&common.config)?)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.dry_run {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(true);
    }
    let mut run = Run::new("noise-validate", common)?;
    let pool = pool(common.workers)?;
    let report = pool.install(|| props::noise_validate(&cfg))?;
    let path = common.out.join("noise_report.json");
    write_json(&path, &report)?;
    run.artifacts.push(path);
    for c in &report.checks {
        println!("{} {}: {:.6e} (limit {:.6e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.limit);
    }
    for e in &report.ells {
        println!("ell={} kappa_grid={:.6} kappa={:.6}", e.ell, e.kappa_grid, e.kappa);
    }
    run.finish(&cfg, cfg.seed, pool.current_num_threads())?;
    Ok(report.passed)
}

fn rate(common: &Common) -> Result<bool> {
    let mut cfg = ExperimentConfig::from_json(&read_config(&common.config)?)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let resolved = cfg.resolved();
    let predicted = experiments::predicted_exponent(&cfg)?;
    if common.dry_run {
        let doc = serde_json::json!({
            "config": resolved,
            "regime": cfg.regime()?,
            "predicted_exponent": predicted,
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
        return Ok(true);
    }
    let mut run = Run::new("rate", common)?;
    let pool = pool(common.workers)?;
    let snapshots = cfg.snapshot_every.map(|_| common.out.as_path());
    let report = pool.install(|| experiments::run_rate(&resolved, snapshots))?;
    let rates = common.out.join("rates.csv");
    experiments::write_rates_csv(&rates, &report.results)?;
    let fit = common.out.join("fit.json");
    experiments::write_fit_json(&fit, &resolved, &report)?;
    run.artifacts.extend([rates, fit]);
    if resolved.per_path_csv {
        run.artifacts.extend(experiments::write_path_csvs(&common.out, &report.results)?);
    }
    if snapshots.is_some() {
        let mut fld: Vec<PathBuf> = std::fs::read_dir(&common.out)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "fld"))
            .collect();
        fld.sort();
        run.artifacts.extend(fld);
    }
    for r in &report.results {
        println!("ell={} estimate={:.6e} stderr={:.3e} bound_rhs={:.6e}", r.ell, r.estimate, r.stderr, r.bound_rhs);
    }
    let f = &report.fit;
    println!(
        "slope={:.4} ci=[{:.4}, {:.4}] predicted={:.4} constant_spread={:.3}",
        f.slope, f.slope_ci[0], f.slope_ci[1], f.predicted_exponent, f.constant_spread
    );
    println!(
        "gates: monotone_2sigma={} slope_at_least_half={} constants_uniform={}",
        f.gates.monotone_2sigma, f.gates.slope_at_least_half, f.gates.constants_uniform
    );
    if let Some(l) = &report.l_doubling {
        println!("l_doubling: relative_change={:.4} within_tolerance={}", l.relative_change, l.within_tolerance);
    }
    run.finish(&resolved, resolved.seed, pool.current_num_threads())?;
    Ok(true)
}

fn props_cmd(selector: &str, common: &Common) -> Result<bool> {
    let names: Vec<&str> = if selector == "all" {
        SUITES.to_vec()
    } else if SUITES.contains(&selector) {
        vec![selector]
    } else {
        return Err(Error::Config(format!("unknown selector '{selector}'; valid: all, {}", SUITES.join(", "))));
    };
    let mut cfg = match &common.config {
        Some(_) => PropsConfig::from_json(&read_config(&common.config)?)?,
        None => PropsConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.dry_run {
        println!("{}", serde_json::to_string_pretty(&serde_json::json!({"suites": names, "config": cfg}))?);
        return Ok(true);
    }
    let mut run = Run::new("props", common)?;
    let pool = pool(common.workers)?;
    let mut reports = Vec::new();
    for name in &names {
        let r = pool.install(|| props::run_suite(name, &cfg))?;
        for c in &r.checks {
            println!("{} {} / {}: {:.6e} (limit {:.6e})", if c.pass { "PASS" } else { "FAIL" }, name, c.name, c.value, c.limit);
        }
        reports.push(r);
    }
    let passed = reports.iter().all(|r| r.passed);
    let path = common.out.join("props_report.json");
    write_json(&path, &serde_json::json!({"passed": passed, "suites": reports}))?;
    run.artifacts.push(path);
    run.finish(&cfg, cfg.seed, pool.current_num_threads())?;
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::NoiseValidate(c) => noise_validate(c),
        Command::Rate(c) => rate(c),
        Command::Props { selector, common } => props_cmd(selector, common),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
