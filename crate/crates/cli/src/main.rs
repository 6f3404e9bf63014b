//! `relict`: batch pipeline driver for relict landslide mapping.
//!
//! One TOML config describes scenes, datasets, models and the experiment
//! grid; subcommands execute the pipeline stages against it. Every command
//! re-run with the same config and seeds rewrites its artifacts identically.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use relict_core::models::{Architecture, Framework};
use relict_core::training::DatasetVariant;

use config::PipelineConfig;

/// Process exit codes: 0 ok, 2 config error, 3 missing dependency,
/// 4 runtime failure. Clap argument errors also exit with 2.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    /// A required artifact does not exist; `run` names the producing command.
    Missing {
        what: String,
        run: String,
    },
    Runtime(relict_core::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Missing { what, run } => {
                write!(f, "missing {what}; run `relict {run}` first")
            }
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<relict_core::Error> for CliError {
    fn from(e: relict_core::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing { .. } => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

/// Map file-not-found onto the missing-dependency exit path; any other
/// failure stays a runtime error.
pub fn missing_if_not_found<T>(
    result: relict_core::error::Result<T>,
    what: &str,
    run: &str,
) -> CliResult<T> {
    result.map_err(|e| match &e {
        relict_core::Error::Io { source, .. }
            if source.kind() == std::io::ErrorKind::NotFound =>
        {
            CliError::Missing {
                what: what.into(),
                run: run.into(),
            }
        }
        _ => CliError::Runtime(e),
    })
}

#[derive(Parser)]
#[command(
    name = "relict",
    version,
    about = "Relict landslide detection pipeline",
    after_help = "Exit codes: 0 ok, 2 config error, 3 missing dependency, 4 runtime failure.\n\
                  RELICT_OUTPUT_ROOT overrides the config's output_root."
)]
struct Cli {
    /// Pipeline configuration file.
    #[arg(short, long, global = true, default_value = "relict.toml")]
    config: PathBuf,
    /// Accept cluster counts outside the published {2,4,6,8,10,12} sweep.
    #[arg(long, global = true)]
    allow_any_k: bool,
    #[command(subcommand)]
    command: Command,
}

/// Selects one framework/architecture/k/dataset combination.
#[derive(Args)]
struct ComboArgs {
    /// `standard` or `proposed`.
    #[arg(long)]
    framework: Framework,
    /// `unet`, `fpn` or `linknet`.
    #[arg(long)]
    arch: Architecture,
    /// Cluster count; required by `proposed`, forbidden by `standard`.
    #[arg(long)]
    k: Option<u32>,
    /// `LD30` or `LD50`.
    #[arg(long)]
    variant: DatasetVariant,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes for every configured scene entry.
    Synth,
    /// Split each scene into train/test areas and build the labeled dataset.
    PrepareLabeled,
    /// Fit k-means models and build balanced cluster datasets per k.
    PrepareCluster,
    /// Build the augmented dataset variants from the labeled dataset.
    Augment {
        /// Only this variant; default builds both LD30 and LD50.
        #[arg(long)]
        variant: Option<DatasetVariant>,
    },
    /// Pre-train one cluster classifier per configured k.
    Pretrain {
        /// Only this cluster count; default sweeps the configured list.
        #[arg(long)]
        k: Option<u32>,
    },
    /// Train one combination and checkpoint it under the models tree.
    Train(ComboArgs),
    /// Predict scar probabilities over a scene's test area.
    Predict {
        #[command(flatten)]
        combo: ComboArgs,
        /// Scene name from the config.
        #[arg(long)]
        scene: String,
    },
    /// Score a combination against a scene's test-area truth mask.
    Evaluate {
        #[command(flatten)]
        combo: ComboArgs,
        /// Scene name from the config.
        #[arg(long)]
        scene: String,
        /// Accept checkpoints produced under a different config hash.
        #[arg(long)]
        force: bool,
    },
    /// Train and evaluate every requested combination, then write the grid
    /// report and the standard-vs-proposed comparison.
    Grid {
        /// Restrict the sweep to one framework.
        #[arg(long)]
        framework: Option<Framework>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let config = PipelineConfig::load(&cli.config, cli.allow_any_k)?;
    match cli.command {
        Command::Synth => commands::synth::run(&config),
        Command::PrepareLabeled => commands::prepare::labeled(&config),
        Command::PrepareCluster => commands::prepare::cluster(&config),
        Command::Augment { variant } => commands::prepare::augment(&config, variant),
        Command::Pretrain { k } => commands::train::pretrain(&config, k),
        Command::Train(combo) => commands::train::train(&config, &combo.into()),
        Command::Predict { combo, scene } => {
            commands::predict::predict(&config, &combo.into(), &scene)
        }
        Command::Evaluate {
            combo,
            scene,
            force,
        } => commands::predict::evaluate(&config, &combo.into(), &scene, force),
        Command::Grid { framework } => commands::grid::run(&config, framework),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

impl From<ComboArgs> for relict_core::evaluation::CombinationId {
    fn from(args: ComboArgs) -> Self {
        Self {
            framework: args.framework,
            architecture: args.arch,
            k: args.k,
            variant: args.variant,
        }
    }
}
