use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssl_kernel_cli::{run, Command, Overrides};

#[derive(Parser)]
#[command(
    name = "ssl-kernel",
    version,
    about = "Induced kernels from self-supervised objectives"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Induced kernels on two spirals with a small and a large neighborhood.
    SpiralDemo(RunArgs),
    /// Supervised, augmented and induced-kernel SVMs on image data.
    Experiment(RunArgs),
    /// Accuracy over representation dimension, C and beta.
    Ablate(RunArgs),
    /// Batched semidefinite program against the closed form.
    SdpCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed; overrides `seed` and `experiment.seeds`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides `workers`.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::SpiralDemo(a) => (Command::SpiralDemo, a),
        Cmd::Experiment(a) => (Command::Experiment, a),
        Cmd::Ablate(a) => (Command::Ablate, a),
        Cmd::SdpCheck(a) => (Command::SdpCheck, a),
    };
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        workers: args.workers,
    };
    match run(command, &args.config, &overrides) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
