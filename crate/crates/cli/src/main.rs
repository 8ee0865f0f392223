use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use cavity_bloch_cli::{exit_code, run, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cavity-bloch", version, about = "Bloch-wave dispersion for lattices of small Dirichlet cavities")]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dispersion branches along the configured k-path, as CSV.
    Bands {
        config: PathBuf,
        /// Output file; overrides `output.bands`.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Capacitance coefficient of an OFF mesh or a builtin shape (sphere, cube, spheroid).
    Capacitance {
        shape: String,
        /// Refinement level: icosphere level, box 2^level divisions, or OFF subdivisions.
        #[arg(long, default_value_t = 3)]
        refinements: u32,
        /// Richardson extrapolation over the last three levels.
        #[arg(long)]
        extrapolate: bool,
    },
    /// Compares the closed-form shifts with the point-scatterer oracle; exit 1 on failure.
    Verify {
        config: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Leading-order field of one branch on a grid over the period cell, as CSV.
    Field {
        config: PathBuf,
        /// Index of the sample along the k-path (0-based).
        #[arg(long = "k")]
        k_index: usize,
        /// Branch index (1-based).
        #[arg(long)]
        branch: usize,
        /// Points per cell edge.
        #[arg(long)]
        grid: usize,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn emit(text: &str, path: Option<&Path>) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

fn output_path(explicit: Option<PathBuf>, config: &RunConfig, configured: &Option<PathBuf>) -> Option<PathBuf> {
    explicit.or_else(|| configured.as_deref().map(|p| config.resolve(p)))
}

fn execute(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Bands { config, output } => {
            let cfg = RunConfig::from_file(&config)?;
            let csv = run::bands_csv(&cfg)?;
            emit(&csv, output_path(output, &cfg, &cfg.output.bands).as_deref())?;
        }
        Command::Capacitance {
            shape,
            refinements,
            extrapolate,
        } => {
            let shape = run::shape_from_arg(&shape)?;
            let result = run::capacitance(&shape, refinements, extrapolate)?;
            emit(&(serde_json::to_string_pretty(&result)? + "\n"), None)?;
        }
        Command::Verify { config, output } => {
            let cfg = RunConfig::from_file(&config)?;
            let result = run::verify(&cfg)?;
            emit(
                &(serde_json::to_string_pretty(&result)? + "\n"),
                output_path(output, &cfg, &cfg.output.verify).as_deref(),
            )?;
            for c in result.checks.iter().filter(|c| !c.pass) {
                log::error!("check failed: {} = {} (threshold {})", c.name, c.value, c.threshold);
            }
            return Ok(result.pass);
        }
        Command::Field {
            config,
            k_index,
            branch,
            grid,
            output,
        } => {
            let cfg = RunConfig::from_file(&config)?;
            let csv = run::field_csv(&cfg, k_index, branch, grid)?;
            emit(&csv, output_path(output, &cfg, &cfg.output.field).as_deref())?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
