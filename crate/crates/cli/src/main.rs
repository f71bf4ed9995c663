//! `fmpbem` command-line driver: frequency sweeps and scaling benchmarks from a TOML scene.

mod error;
mod run;
mod scene;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fmpbem::pipeline::Method;

use crate::error::CliError;
use crate::run::{run_benchmark, run_sweep, Overrides};
use crate::scene::Scene;

#[derive(Debug, Parser)]
#[command(name = "fmpbem", version, about = "Acoustic scattering by finite periodic arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the frequency sweep of a scene and write insertion loss and fields.
    Run(Common),
    /// Time assembly and matrix-vector products over lattice sizes.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Comma-separated lattice counts along the benchmark axis.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Scene file (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Backend override: dense, pbem or fmpbem.
    #[arg(long, short)]
    method: Option<String>,
    /// Worker threads; fixes the pool size for reproducible runs.
    #[arg(long, short)]
    threads: Option<usize>,
    /// Output directory override.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Increase log detail (-v info, -vv debug).
    #[arg(long, short, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn init(common: &Common) -> Result<(Scene, Overrides), CliError> {
    let level = match common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    let method = common
        .method
        .as_deref()
        .map(|m| m.parse::<Method>().map_err(|e| CliError::Usage(format!("--method: {e}"))))
        .transpose()?;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let scene = Scene::load(&common.config)?;
    Ok((scene, Overrides { method, output: common.output.clone(), threads: common.threads }))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(common) => {
            let (scene, ov) = init(&common)?;
            let outcome = run_sweep(&scene, &common.config, &ov)?;
            let flagged = outcome.rows.iter().filter(|r| r.status != run::RowStatus::Converged).count();
            println!("{} frequencies written to {} ({flagged} flagged)", outcome.rows.len(), outcome.directory.display());
            match outcome.failure {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::Benchmark { common, sizes } => {
            let (scene, ov) = init(&common)?;
            let records = run_benchmark(&scene, &common.config, &ov, sizes)?;
            println!("{} benchmark rows written", records.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
