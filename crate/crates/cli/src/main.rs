use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use stickyheat_cli::runner::load_config;
use stickyheat_cli::sweep::write_sweep;
use stickyheat_cli::{acceptance, run, sweep, thread_pool, RunOptions, SweepPlan};

#[derive(Parser)]
#[command(name = "stickyheat", version, about = "Sticky-reflected stochastic heat equation simulator")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "STICKYHEAT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and list errors and warnings.
    Validate { config: PathBuf },
    /// Simulate a scenario and write its artifacts.
    Run {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Write the increments applied to this path as CSV.
        #[arg(long, value_name = "PATH")]
        dump_increments: Option<u64>,
    },
    /// Re-run a base scenario along one parameter axis.
    Sweep {
        plan: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the acceptance suite.
    Selftest {
        /// Only these criteria (comma separated ids).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    let pool = thread_pool(cli.threads)?;
    match cli.command {
        Command::Validate { config } => {
            let c = load_config(&config)?;
            let r = c.validate();
            for w in &r.warnings {
                println!("warning: {w}");
            }
            for e in &r.errors {
                println!("error: {e}");
            }
            if r.is_ok() {
                println!("ok: {}", c.hash());
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::Run { config, out, dump_increments } => {
            let c = load_config(&config)?;
            let opts = RunOptions { out_dir: out, dump_increments };
            let s = pool.install(|| run(&c, &opts))?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&s)?);
            if s.aborted_paths.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("{} path(s) hit the overflow guard", s.aborted_paths.len());
                Ok(ExitCode::from(3))
            }
        }
        Command::Sweep { plan, out } => {
            let (p, base) = SweepPlan::load(&plan)?;
            let rows = pool.install(|| sweep(&p, &base))?;
            let name = format!("{}-{}", base.name, serde_json::to_value(p.axis)?.as_str().context("axis name")?);
            write_sweep(&out, &name, &p, &rows)?;
            println!("{}", serde_json::to_string_pretty(&rows)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest { only } => {
            let outcomes = pool.install(|| acceptance::run_all(&only));
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
