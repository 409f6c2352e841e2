use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use symlab::report::emit_report;
use symlab::run::{run_config, RunOptions};

/// Symbol and homogenization experiments.
///
/// Exit codes: 0 success, 1 I/O error, 2 invalid input, 3 solver failure
/// (or, for `report`, at least one failed run).
#[derive(Debug, Parser)]
#[command(name = "symlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a key=value config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides `out` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Master seed (overrides `seed` in the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize the runs below a directory into summary.json and index.html.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            out,
            force,
            threads,
            seed,
        } => {
            let opts = RunOptions {
                out,
                force,
                threads,
                seed,
            };
            match run_config(&config, &opts) {
                Ok(o) => {
                    println!("{}", o.dir.display());
                    0
                }
                Err(f) => {
                    eprintln!("error: {}", f.error);
                    if let Some(d) = f.dir {
                        eprintln!("partial artifacts in {}", d.display());
                    }
                    f.error.exit_code()
                }
            }
        }
        Command::Report { dir } => match emit_report(&dir) {
            Ok(s) => {
                for w in &s.warnings {
                    eprintln!("warning: {w}");
                }
                println!("{} runs, {} failed, {} warnings", s.run_count, s.failed_count, s.warning_count);
                s.exit_code()
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code as u8)
}
