mod config;
mod run;
mod summary;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "hardy-vss", version, about = "Singular solutions of the heat equation with Hardy potential and absorption")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized suites; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent runs (sweep cells).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Exponents and regime for the configured parameters.
    Derive,
    /// Weighted heat kernel from the origin, against the closed form.
    Kernel,
    /// A single run from mollified data of width source.epsilon.
    Evolve,
    /// Source solution by refinement over source.epsilons.
    Source,
    /// Very singular solution by saturation in ϰ.
    Vss,
    /// Self-similar profile (variational and/or shooting).
    Profile,
    /// Critical-exponent sweep over sweep.p_values.
    Sweep,
    /// Acceptance criteria listed in verify.criteria.
    Verify,
    /// Field-by-field diff of two run directories.
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        /// Relative tolerance per numeric field.
        #[arg(long, default_value_t = 0.0)]
        rtol: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Derive => "derive",
            Command::Kernel => "kernel",
            Command::Evolve => "evolve",
            Command::Source => "source",
            Command::Vss => "vss",
            Command::Profile => "profile",
            Command::Sweep => "sweep",
            Command::Verify => "verify",
            Command::Compare { .. } => "compare",
        }
    }
}

fn compare(a: &Path, b: &Path, rtol: f64, out: &Path) -> anyhow::Result<bool> {
    let report = summary::compare_runs(a, b, rtol)?;
    println!("experiment {}: {} fields compared, rtol {}", report.experiment, report.fields_compared, report.rtol);
    for d in &report.differences {
        let kind = if d.parameter_change { "parameter change" } else if d.within_tolerance { "within tolerance" } else { "EXCEEDS" };
        println!("  {} [{}] max abs {:e} max rel {:e}: {kind}", d.path, d.provenance, d.max_abs, d.max_rel);
    }
    for s in &report.structural {
        println!("  {s}");
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("compare.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report.within_tolerance)
}

fn execute(cli: &Cli) -> anyhow::Result<bool> {
    if let Command::Compare { dir_a, dir_b, rtol } = &cli.command {
        return compare(dir_a, dir_b, *rtol, &cli.out);
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let name = cli.command.name();
    let mut summary = run::header(&cfg, name).with_context(|| format!("{name} experiment"))?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let dir = cli.out.as_path();
    info!("{name}: writing to {}", dir.display());
    let mut pass = true;
    let body = match &cli.command {
        Command::Derive => run::derive(&cfg, dir),
        Command::Kernel => run::kernel(&cfg, dir),
        Command::Evolve => run::evolve_run(&cfg, dir),
        Command::Source => run::source(&cfg, dir),
        Command::Vss => run::vss(&cfg, dir),
        Command::Profile => run::profile(&cfg, dir),
        Command::Sweep => run::sweep(&cfg, dir, cli.jobs),
        Command::Verify => run::verify(&cfg, dir).map(|(s, all)| {
            pass = all;
            s
        }),
        Command::Compare { .. } => unreachable!("handled above"),
    }
    .with_context(|| format!("{name} experiment"))?;
    summary.extend(body);
    summary::write_summary(dir, &summary)?;
    Ok(pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
