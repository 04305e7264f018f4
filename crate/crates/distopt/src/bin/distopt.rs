use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use distopt::{load_config, run_command, CliError, Command};

#[derive(Parser)]
#[command(name = "distopt", version, about = "Topology optimization with AM distortion control")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Snapshot period in iterations (optimize, sweep-gamma).
    #[arg(long)]
    snapshot_every: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the layer-by-layer build of the full design domain.
    BuildSim(Common),
    /// Fit the inherent strain to a measured top-surface profile.
    Identify(Common),
    /// Run the optimization.
    Optimize(Common),
    /// Run the optimization for each weight in sweep.gammas.
    SweepGamma(Common),
}

fn threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("DISTOPT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::config(format!("DISTOPT_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::BuildSim(a) => (Command::BuildSim, a),
        Cmd::Identify(a) => (Command::Identify, a),
        Cmd::Optimize(a) => (Command::Optimize, a),
        Cmd::SweepGamma(a) => (Command::SweepGamma, a),
    };
    let result = threads().and_then(|_| {
        let mut settings = load_config(&args.config)?;
        if let Some(k) = args.snapshot_every {
            settings.snapshot_every = k;
        }
        run_command(command, &settings, &args.out)
    });
    match result {
        Ok(manifest) => {
            println!("{}: {} ({} files in {})", manifest.command, manifest.termination, manifest.outputs.len(), args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
