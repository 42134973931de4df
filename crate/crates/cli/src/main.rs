use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use rhgame_cli::sweep::Axis;
use rhgame_cli::{cmd_analyze, cmd_run, cmd_sweep, cmd_validate, exit_code, Flags, EXIT_OK};

/// Rolling-horizon jamming games on consensus networks.
#[derive(Debug, Parser)]
#[command(name = "rhgame", version)]
struct Cli {
    /// Directory for run artifacts.
    #[arg(long, global = true, default_value = "out")]
    output: PathBuf,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Reserved; runs are deterministic and take no seed.
    #[arg(long, global = true)]
    seedless: bool,
    /// Cap on distinct subgames per decision, overriding the scenario.
    #[arg(long, global = true)]
    work_bound: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write the trace, plot data and summary.
    Run { scenario: PathBuf },
    /// Print the static conditions, theta vector and cluster bounds.
    Analyze { scenario: PathBuf },
    /// Run a grid of parameter variations.
    Sweep {
        scenario: PathBuf,
        /// Axis as key=v1,v2,... with key in h_a, h_d, t_a, t_d, rho_a, rho_d.
        #[arg(long = "set", value_name = "KEY=VALUES")]
        axes: Vec<Axis>,
    },
    /// Check a scenario and print it with every default filled in.
    Validate { scenario: PathBuf },
}

fn execute(cli: Cli) -> Result<()> {
    let Cli {
        output,
        json,
        seedless: _,
        work_bound,
        command,
    } = cli;
    let flags = Flags {
        output,
        json,
        work_bound,
    };
    match command {
        Command::Run { scenario } => {
            let summary = cmd_run(&scenario, &flags)?;
            if flags.json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                print!("{}", summary.text());
                println!("artifacts: {}", flags.output.display());
            }
        }
        Command::Analyze { scenario } => {
            let report = cmd_analyze(&scenario, &flags)?;
            if flags.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.text());
            }
        }
        Command::Sweep { scenario, axes } => {
            let records = cmd_sweep(&scenario, &axes, &flags)?;
            if flags.json {
                println!("{}", serde_json::to_string_pretty(&records)?);
            } else {
                for r in &records {
                    let point: Vec<String> =
                        r.point.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    let outcome = match (&r.summary, &r.error) {
                        (Some(s), _) => format!("{:?}, {} clusters", s.verdict, s.cluster_count),
                        (None, Some(e)) => e.clone(),
                        (None, None) => String::new(),
                    };
                    println!("[{}] exit {}: {outcome}", point.join(" "), r.exit_code);
                }
                println!("table: {}", flags.output.join("sweep.csv").display());
            }
        }
        Command::Validate { scenario } => {
            let s = cmd_validate(&scenario, &flags)?;
            if flags.json {
                println!("{}", serde_json::to_string_pretty(&s)?);
            } else {
                print!("{}", s.to_toml_string()?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
