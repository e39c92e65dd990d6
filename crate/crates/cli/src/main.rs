use std::path::PathBuf;
use std::process::ExitCode;

use boostvi_cli::commands::{cmd_compare, cmd_run, cmd_validate, load, Failure, Overrides};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "boostvi", version, about = "Boosting variational inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replicate of one method and write traces plus summary.json.
    Run(Common),
    /// Run every [[methods]] entry over shared seeds and write summary.csv.
    Compare(Common),
    /// Check the file and print the resolved configuration.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Output directory (default: `output` key, then $BOOSTVI_OUT, then ./boostvi-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// First replicate seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent runs.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Write wall_seconds as 0 so repeated runs give identical files.
    #[arg(long)]
    no_wall_clock: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            workers: self.workers,
            iterations: self.iterations,
            no_wall_clock: self.no_wall_clock,
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run(c) => {
            let cfg = load(&c.config, &c.overrides())?;
            let s = cmd_run(&cfg)?;
            eprintln!("{} replicates of {} done", s.replicates, s.method);
        }
        Command::Compare(c) => {
            let cfg = load(&c.config, &c.overrides())?;
            let all = cmd_compare(&cfg)?;
            eprintln!("{} methods x {} seeds done", all.len(), cfg.replicates);
        }
        Command::Validate(c) => {
            let cfg = load(&c.config, &c.overrides())?;
            print!("{}", cmd_validate(&cfg));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with 2 on usage errors and 0 for --help
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("boostvi: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
