use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nonrev_cli::{exit_code, list_text, run_experiment, Error, ExperimentConfig};

#[derive(Parser)]
#[command(name = "nonrev", version, about = "Runs variance-ordering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the experiments.
    List,
}

fn run(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> Result<i32, Error> {
    let mut config = ExperimentConfig::load(&config)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(out) = out {
        config.output = Some(out);
    }
    let report = run_experiment(&config)?;
    let dir = config.output_dir();
    report.write(&dir)?;
    for check in &report.checks {
        let verdict = if check.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {} (violation {:e})", check.name, check.max_violation);
    }
    println!("{} -> {}", config.experiment, dir.display());
    Ok(exit_code(&report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::List => {
            print!("{}", list_text());
            0
        }
        Command::Run { config, seed, out } => run(config, seed, out).unwrap_or_else(|e| {
            eprintln!("error: {e}");
            e.exit_code()
        }),
    };
    ExitCode::from(code as u8)
}
