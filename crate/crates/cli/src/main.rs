use clap::{Parser, Subcommand};

use acbench_cli::commands::{cmd_gen_offline, cmd_plot, cmd_run, cmd_sweep};
use acbench_cli::config::RunConfig;
use acbench_cli::svg::PlotKind;
use acbench_cli::{configure_parallelism, CliError};

#[derive(Parser)]
#[command(
    name = "acbench",
    about = "Actor-critic learners on exactly solvable MDPs: runs, sweeps, offline data, plots"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one (algo, env, seed) run and write episodes.csv + summary.json.
    Run {
        #[arg(short, long)]
        config: String,
    },
    /// Run every (algo, seed) pair in parallel and write aggregate artifacts.
    Sweep {
        #[arg(short, long)]
        config: String,
    },
    /// Render an aggregate.csv into a standalone SVG chart.
    Plot {
        #[arg(short, long)]
        input: String,
        #[arg(short, long, default_value = "regret")]
        kind: String,
        #[arg(long)]
        loglog: bool,
        #[arg(short, long)]
        output: String,
    },
    /// Generate an offline dataset CSV (+ JSON sidecar) from a config.
    GenOffline {
        #[arg(short, long)]
        config: String,
        #[arg(short, long)]
        output: String,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_parallelism();
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::from_path(&config)?;
            let dir = cmd_run(&cfg)?;
            println!("run artifacts written to {}", dir.display());
            Ok(())
        }
        Command::Sweep { config } => {
            let cfg = RunConfig::from_path(&config)?;
            let dir = cmd_sweep(&cfg)?;
            println!("sweep artifacts written to {}", dir.display());
            Ok(())
        }
        Command::Plot {
            input,
            kind,
            loglog,
            output,
        } => {
            let kind = PlotKind::parse(&kind)?;
            cmd_plot(&input, kind, loglog, &output)?;
            println!("plot written to {output}");
            Ok(())
        }
        Command::GenOffline { config, output } => {
            let cfg = RunConfig::from_path(&config)?;
            let path = cmd_gen_offline(&cfg, &output)?;
            println!("offline dataset written to {}", path.display());
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
