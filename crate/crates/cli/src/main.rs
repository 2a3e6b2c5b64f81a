use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qskat::commands::{self, CliError, Format, Output};
use qskat::server;
use qskat::session::SessionMode;
use qskat_core::gates::EvolutionMode;

#[derive(Parser)]
#[command(
    name = "qskat",
    version,
    about = "Quantum-circuit model and advisor for Skat end games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Write output to a file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Human-readable table instead of JSON/CSV.
    #[arg(long, global = true)]
    pretty: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the four-card example to a stage and sample it.
    Toy {
        #[arg(long, default_value_t = 1000)]
        shots: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// initial, a-played, b-played, trick1 or final.
        #[arg(long, default_value = "final")]
        stage: String,
        #[arg(long, default_value = "paper-exact")]
        mode: EvolutionMode,
    },
    /// Count deals; without a file, prints the reference table.
    Deals { spec: Option<PathBuf> },
    /// Card qualities for the nine-card end game.
    Showcase,
    /// Quantum counting demonstrator.
    Qcount {
        #[arg(long, default_value_t = 7)]
        t: usize,
    },
    /// Expected payoff per game against win probability.
    Payoff {
        /// Include the 50-point win/loss bonus.
        #[arg(long)]
        sf: bool,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Card qualities for a scenario file.
    Recommend {
        scenario: PathBuf,
        #[arg(long, default_value = "oracle")]
        mode: SessionMode,
    },
    /// Time the classical solver on reduced decks.
    Bench {
        #[arg(long, default_value_t = 2)]
        min_cards: usize,
        #[arg(long, default_value_t = 4)]
        max_cards: usize,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the advisor HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        state_dir: Option<PathBuf>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, CliError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn run(cli: Cli) -> Result<Option<Output>, CliError> {
    Ok(Some(match cli.command {
        Command::Toy {
            shots,
            seed,
            stage,
            mode,
        } => commands::toy(shots, seed, &stage, mode)?,
        Command::Deals { spec } => commands::deals(spec.as_ref().map(read_json).transpose()?)?,
        Command::Showcase => commands::showcase()?,
        Command::Qcount { t } => commands::qcount(t)?,
        Command::Payoff { sf, points } => commands::payoff(sf, points)?,
        Command::Recommend { scenario, mode } => commands::recommend(read_json(&scenario)?, mode)?,
        Command::Bench {
            min_cards,
            max_cards,
            samples,
            seed,
        } => commands::bench(min_cards, max_cards, samples, seed)?,
        Command::Serve { port, state_dir } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(port, state_dir))?;
            return Ok(None);
        }
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (format, pretty, out) = (cli.format, cli.pretty, cli.out.clone());
    let result = run(cli).and_then(|o| match o {
        None => Ok(()),
        Some(o) => {
            let text = o.render(format, pretty)?;
            match out {
                Some(path) => std::fs::write(path, text).map_err(CliError::from),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
