use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nevlab_harness::checks::{find, registry};
use nevlab_harness::run::threads_from_env;
use nevlab_harness::{run, ExperimentConfig};

#[derive(Parser)]
#[command(name = "nevlab", about = "Numerical checks on model Kähler connected sums", disable_version_flag = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks selected by a configuration file.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List every registered check.
    ListChecks,
    /// Print the statement, columns and method of one check.
    Describe {
        check: String,
    },
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: invalid config {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let threads = match threads_from_env() {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(2);
                }
            };
            match run(&cfg, out.as_deref(), threads) {
                Ok(res) => {
                    for (c, (_, secs)) in res.summary.checks.iter().zip(&res.timings) {
                        let status = format!("{:?}", c.status).to_uppercase();
                        eprintln!("{status:5} {:24} {:8.2}s", c.name, secs);
                        if let Some(e) = &c.error {
                            eprintln!("      {e}");
                        }
                        for a in c.assertions.iter().filter(|a| !a.passed) {
                            eprintln!("      {} = {:e} (threshold {:e})", a.name, a.value, a.threshold);
                        }
                    }
                    eprintln!("artifacts in {}", res.out_dir.display());
                    ExitCode::from(res.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(3)
                }
            }
        }
        Command::ListChecks => {
            for c in registry() {
                let kind = if c.monte_carlo { "mc" } else { "analytic" };
                println!("{:24} {:8} {}", c.name, kind, c.anchor);
            }
            ExitCode::SUCCESS
        }
        Command::Describe { check } => match find(&check) {
            Some(c) => {
                println!("{}", c.name);
                println!("  statement: {}", c.anchor);
                println!("  method:    {}", c.description);
                println!("  columns:   schema_version,{}", c.columns.join(","));
                println!("  monte carlo: {}", c.monte_carlo);
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("error: unknown check {check:?}; see `nevlab list-checks`");
                ExitCode::from(2)
            }
        },
        Command::Version => {
            println!("nevlab {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
    }
}
