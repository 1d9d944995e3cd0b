//! `prefcal`: preference-calibration pipeline over pairwise comparisons.
//!
//! Stages are composable subcommands writing versioned artifacts into one
//! run directory: ingest -> rate -> mine -> score -> calibrate -> evaluate,
//! plus the end-to-end dimension search (`optimize`), one-parameter sweeps
//! (`sweep`), and a synthetic fixture generator (`synth`).
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime failure,
//! 3 backend failure.

mod commands;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use prefcal::config::RunConfig;

use commands::{CliError, Context};

#[derive(Debug, Parser)]
#[command(
    name = "prefcal",
    version,
    about = "Calibrates frozen-VLM concept scores against human pairwise preferences"
)]
struct Cli {
    /// Path to the run configuration JSON.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    /// Override the configured run directory.
    #[arg(long, global = true)]
    out_dir: Option<std::path::PathBuf>,

    /// Override the configured comparisons table.
    #[arg(long, global = true)]
    comparisons: Option<std::path::PathBuf>,

    /// Override the configured embedding sidecar file.
    #[arg(long, global = true)]
    embeddings: Option<std::path::PathBuf>,

    /// Embedding codec: text or binary.
    #[arg(long, global = true)]
    embeddings_format: Option<String>,

    /// Override the root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the vote table, apply consensus filtering, and write the
    /// reference/pool splits.
    Ingest,
    /// Compute per-image ratings from the reference comparisons.
    Rate,
    /// Mine a dimension set per category through the configured backend.
    Mine,
    /// Score reference and pool pairs with the configured dimension sets.
    Score {
        /// Scoring mode: 1 single-image direct, 2 pairwise direct,
        /// 3 single-image multi-agent, 4 pairwise multi-agent.
        #[arg(long)]
        mode: Option<u8>,
        /// Backend: http or mock.
        #[arg(long)]
        backend: Option<String>,
    },
    /// Calibrate pool pairs against the reference manifold.
    Calibrate,
    /// Compute metrics for calibrated and raw predictions.
    Evaluate,
    /// Run the end-to-end dimension-set optimization loop.
    Optimize {
        /// Resume from the trial ledger in this run directory.
        #[arg(long)]
        resume: Option<std::path::PathBuf>,
    },
    /// Sweep one calibration parameter over a value grid, holding the rest
    /// at their configured defaults.
    Sweep {
        /// Parameter to vary: K, alpha, tau_kernel, lambda, epsilon,
        /// theta, or selection_ratio.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
    /// Generate a synthetic fixture (vote table, embeddings, world file,
    /// ready-to-run config).
    Synth {
        /// Output directory for the fixture files.
        #[arg(long)]
        out: std::path::PathBuf,
        /// Pairs per category.
        #[arg(long, default_value_t = 40)]
        pairs: usize,
        /// Images per category.
        #[arg(long, default_value_t = 30)]
        images: usize,
        /// World seed.
        #[arg(long, default_value_t = 42)]
        world_seed: u64,
        /// Categories (comma-separated); defaults to wealthy.
        #[arg(long)]
        categories: Option<String>,
    },
}

fn main() {
    let help = format!(
        "Configuration keys and their defaults (JSON, pass via --config):\n{}",
        serde_json::to_string_pretty(&RunConfig::standard()).expect("default config serializes")
    );
    let matches = Cli::command().after_help(help).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let code = match run(cli) {
        Ok(()) => 0,
        Err(CliError::Validation(message)) => {
            eprintln!("validation error: {message}");
            1
        }
        Err(CliError::Runtime(message)) => {
            eprintln!("error: {message}");
            2
        }
        Err(CliError::Backend(message)) => {
            eprintln!("backend error: {message}");
            3
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Synth {
        out,
        pairs,
        images,
        world_seed,
        categories,
    } = &cli.command
    {
        return commands::cmd_synth(out, *pairs, *images, *world_seed, categories.as_deref());
    }

    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Validation(format!("cannot read config {}: {e}", path.display()))
            })?;
            RunConfig::from_json(&text).map_err(CliError::Validation)?
        }
        None => RunConfig::standard(),
    };
    if let Some(out_dir) = &cli.out_dir {
        config.paths.out_dir = out_dir.clone();
    }
    if let Some(comparisons) = &cli.comparisons {
        config.paths.comparisons = comparisons.clone();
    }
    if let Some(embeddings) = &cli.embeddings {
        config.paths.embeddings = embeddings.clone();
    }
    if let Some(format) = &cli.embeddings_format {
        config.paths.embeddings_format = format
            .parse()
            .map_err(CliError::Validation)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.search.seed = seed;
    }
    let violations = config.violations();
    if !violations.is_empty() {
        return Err(CliError::Validation(format!(
            "invalid configuration:\n  - {}",
            violations.join("\n  - ")
        )));
    }

    let context = Context::new(config)?;
    match cli.command {
        Command::Ingest => commands::cmd_ingest(&context),
        Command::Rate => commands::cmd_rate(&context),
        Command::Mine => commands::cmd_mine(&context),
        Command::Score { mode, backend } => commands::cmd_score(&context, mode, backend),
        Command::Calibrate => commands::cmd_calibrate(&context),
        Command::Evaluate => commands::cmd_evaluate(&context),
        Command::Optimize { resume } => commands::cmd_optimize(&context, resume),
        Command::Sweep { param, values } => commands::cmd_sweep(&context, &param, &values),
        Command::Synth { .. } => unreachable!("handled above"),
    }
}
