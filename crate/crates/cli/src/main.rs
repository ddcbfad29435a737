use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use ipnas_cli::commands;

/// Neural architecture search with IP-address-encoded particle swarms.
#[derive(Debug, Parser)]
#[command(name = "ipnas", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a search; writes gbest.json and trajectory.csv.
    Search {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Decode dotted addresses or particle positions into layers.
    #[command(group(ArgGroup::new("input").required(true).args(["addresses", "positions"])))]
    Decode {
        /// Addresses such as 2.61 18.143 27.255.
        addresses: Vec<String>,
        /// CSV of positions (plain rows or a trajectory file).
        #[arg(long, conflicts_with = "addresses")]
        positions: Option<PathBuf>,
        /// Output classes for a trailing fully-connected layer.
        #[arg(long)]
        num_classes: Option<usize>,
    },
    /// Fitness of the particles in a positions CSV.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        positions: PathBuf,
    },
    /// Two-component PCA projection of a trajectory file.
    Pca {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (mut out, mut err) = (std::io::stdout().lock(), std::io::stderr());
    let result = match &cli.command {
        Command::Search {
            config,
            seed,
            out: dir,
        } => commands::search(config, *seed, dir, &mut out).map(|_| ()),
        Command::Decode {
            addresses,
            positions,
            num_classes,
        } => commands::decode(
            addresses,
            positions.as_deref(),
            *num_classes,
            &mut out,
            &mut err,
        ),
        Command::Eval { config, positions } => {
            commands::eval(config, positions, &mut out).map(|_| ())
        }
        Command::Pca {
            trajectory,
            out: path,
        } => commands::pca(trajectory, path, &mut out).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
