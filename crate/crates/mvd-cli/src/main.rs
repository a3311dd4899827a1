use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mvd_cli::commands;

#[derive(Parser)]
#[command(
    name = "mvd",
    version,
    about = "Age-structured population solver: transport along characteristics, \
             implicit age diffusion, nonlocal birth boundary"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a problem from a JSON config and write CSV profiles plus meta.json.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Refinement study: h -> h/2, dt -> dt/4 per level; writes convergence.csv.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        levels: usize,
        /// Compare against the finest level instead of an exact solution.
        #[arg(long = "self")]
        self_convergence: bool,
    },
    /// Check the shipped problems against the residual and compatibility oracles.
    VerifyBuiltin,
    /// Print the Newton-Cotes weights for M panels.
    Weights {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        rule: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { config } => commands::cmd_solve(&config),
        Command::Converge {
            config,
            levels,
            self_convergence,
        } => {
            let mode = commands::exec_mode_from_env();
            commands::cmd_converge(&config, levels, self_convergence, mode).map(|_| ())
        }
        Command::VerifyBuiltin => commands::cmd_verify_builtin(),
        Command::Weights { m, rule } => commands::cmd_weights(m, &rule),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
