use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "ddrom", version, about = "Domain-decomposed nonlinear-manifold ROMs for 2D Burgers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw Latin hypercube parameter configurations.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Run the monolithic FOM for every configuration and store snapshots.
    Snapshot {
        #[command(flatten)]
        common: Common,
        /// Keep every n-th time index.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Train the interior, vertical-port and horizontal-port autoencoders.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        interior_dim: Option<usize>,
        #[arg(long)]
        port_dim: Option<usize>,
    },
    /// Write a ROM manifest for the deployment layout.
    Compose {
        #[command(flatten)]
        common: Common,
        /// Use identity encoders/decoders instead of trained models.
        #[arg(long)]
        identity: bool,
    },
    /// Decomposed full-order solve on the deployment layout.
    SolveFom {
        #[command(flatten)]
        common: Common,
        /// Comma-separated amplitudes, one per subdomain.
        #[arg(long)]
        mu: Option<String>,
    },
    /// Latent solve from a ROM manifest.
    SolveRom {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        mu: Option<String>,
    },
    /// Error and speedup of a ROM run against a FOM run.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fom: Option<PathBuf>,
        #[arg(long)]
        rom: Option<PathBuf>,
    },
    /// Train and evaluate every latent-dimension pair of the sweep.
    Pareto {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        test_cases: Option<usize>,
    },
}

fn error_line(kind: &str, message: &str) {
    let line = serde_json::json!({ "status": "error", "kind": kind, "message": message });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            error_line("usage", e.to_string().lines().next().unwrap_or("bad arguments"));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Sample { common, m } => commands::sample(&common, m),
        Command::Snapshot { common, stride } => commands::snapshot(&common, stride),
        Command::Train {
            common,
            epochs,
            interior_dim,
            port_dim,
        } => commands::train(&common, epochs, interior_dim, port_dim),
        Command::Compose { common, identity } => commands::compose(&common, identity),
        Command::SolveFom { common, mu } => commands::solve_fom(&common, mu.as_deref()),
        Command::SolveRom { common, manifest, mu } => commands::solve_rom(&common, manifest, mu.as_deref()),
        Command::Bench { common, fom, rom } => commands::bench(&common, fom, rom),
        Command::Pareto { common, test_cases } => commands::pareto(&common, test_cases),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            error_line(commands::error_kind(&e), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
