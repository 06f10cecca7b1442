use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sustaineval::{cmd_run, cmd_sweep, plot, CliError};

#[derive(Parser)]
#[command(name = "sustaineval", version, about = "Long-term sustainability vs. performance evaluation of learners")]
struct Cli {
    /// Replaces the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (run) or root (sweep). Defaults to the config's
    /// `output_dir`, then $SUSTAINEVAL_OUT_DIR, then ./results.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write checkpoints.csv and manifest.json.
    Run { config: PathBuf },
    /// Run every cell of the config's [grid] section.
    Sweep { config: PathBuf },
    /// Plot one or more result directories.
    Plot {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Output path; the SVG and CSV are written next to each other.
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let out_dir = cli.out_dir.as_deref();
    let result = match cli.command {
        Command::Run { config } => cmd_run(&config, cli.seed, out_dir).map(|o| {
            println!("{}: {} checkpoints in {}", o.run_id, o.checkpoints, o.dir.display());
        }),
        Command::Sweep { config } => cmd_sweep(&config, cli.seed, out_dir).map(|cells| {
            for o in cells {
                println!("{}: {} checkpoints in {}", o.run_id, o.checkpoints, o.dir.display());
            }
        }),
        Command::Plot { dirs, output } => plot::plot(&dirs, &output)
            .map(|(svg, csv)| println!("wrote {} and {}", svg.display(), csv.display()))
            .map_err(CliError::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
