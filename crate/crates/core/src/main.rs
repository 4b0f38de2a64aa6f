use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nonauto_mr::cli::{self, Failure, Report};

/// Maximal-regularity solver and certifier for non-autonomous second-order
/// problems.
#[derive(Parser)]
#[command(name = "nonauto-mr", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify, solve and verify a scenario.
    Run {
        config: PathBuf,
        /// Output directory (overrides output.directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convergence study against the declared exact solution.
    Study {
        config: PathBuf,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Form bounds and space-time certificate only.
    Certify {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() {
    if let Some(n) = std::env::var("NONAUTO_MR_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn summarize(report: &Report) -> ExitCode {
    for c in &report.checks {
        println!("{:<6} {:<24} {:.6e}", if c.passed { "ok" } else { "FAIL" }, c.name, c.value);
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::from(1) }
}

fn fail(e: Failure) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    configure_threads();
    let result = match &args.command {
        Command::Run { config, out } => cli::run(config, out.as_deref()).map(|r| summarize(&r)),
        Command::Certify { config, out } => cli::certify(config, out.as_deref()).map(|r| summarize(&r)),
        Command::Study { config, levels, out } => cli::study(config, *levels, out.as_deref()).map(|rows| {
            for r in &rows {
                println!("level {} dt {:.3e} errL2H {:.6e} errL2V {:.6e}", r.level, r.dt, r.err_h, r.err_v);
            }
            ExitCode::SUCCESS
        }),
    };
    result.unwrap_or_else(fail)
}
