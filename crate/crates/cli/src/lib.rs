//! The `hepacut` command-line pipeline: phantom → preprocess → infer →
//! refine → evaluate. Each stage reads and writes MetaImage files and leaves
//! a JSON provenance sidecar next to its output.

pub mod commands;
pub mod config;
pub mod error;
pub mod provenance;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_evaluate, cmd_infer, cmd_init_weights, cmd_phantom, cmd_preprocess, cmd_refine};
pub use config::{PipelineConfig, ProbabilitySource, Source};
pub use error::{CliError, CliResult, FailureKind};

#[derive(Debug, Parser)]
#[command(name = "hepacut", version, about = "Graph-cut refinement of volumetric liver likelihood maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pad/crop, resample, window and diffuse a volume
    Preprocess,
    /// Run the network to produce a likelihood map
    Infer,
    /// Refine a likelihood map into a mask
    Refine,
    /// Score result masks against references
    Evaluate,
    /// Write a synthetic volume, truth mask and likelihood map
    Phantom,
    /// Write random (or zero) network weights
    InitWeights,
    /// List the config keys with their default values
    Keys,
}

/// Every flag maps onto the config key of the same name (dashes become
/// underscores). `--set` reaches any key.
#[derive(Debug, Default, Args)]
pub struct Options {
    /// Flat `key = value` config file
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Override any config key
    #[arg(short, long = "set", value_name = "KEY=VALUE", value_parser = config::parse_assignment, global = true)]
    pub set: Vec<(String, String)>,
    #[arg(long, global = true)]
    pub volume: Option<String>,
    #[arg(long, global = true)]
    pub probability: Option<String>,
    #[arg(long, global = true)]
    pub weights: Option<String>,
    /// Comma-separated result masks (evaluate)
    #[arg(long, global = true)]
    pub result: Option<String>,
    /// Comma-separated reference masks (evaluate)
    #[arg(long, global = true)]
    pub truth: Option<String>,
    #[arg(long, global = true)]
    pub phantom_spec: Option<String>,
    #[arg(short, long, global = true)]
    pub out_dir: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// tiny, scaled or full
    #[arg(long, global = true)]
    pub network: Option<String>,
    #[arg(long, global = true)]
    pub lambda: Option<String>,
    #[arg(long, global = true)]
    pub beta: Option<String>,
    /// A number, or `auto`
    #[arg(long, global = true)]
    pub gamma: Option<String>,
    /// corrected or literal
    #[arg(long, global = true)]
    pub sign_mode: Option<String>,
}

impl Options {
    /// `--set` pairs first, then the named flags.
    pub fn overrides(&self) -> Vec<(String, String)> {
        let named = [
            ("volume", &self.volume),
            ("probability", &self.probability),
            ("weights", &self.weights),
            ("result", &self.result),
            ("truth", &self.truth),
            ("phantom_spec", &self.phantom_spec),
            ("out_dir", &self.out_dir),
            ("seed", &self.seed),
            ("network", &self.network),
            ("lambda", &self.lambda),
            ("beta", &self.beta),
            ("gamma", &self.gamma),
            ("sign_mode", &self.sign_mode),
        ];
        let mut out = self.set.clone();
        out.extend(named.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v))));
        out
    }
}

/// Resolve the config and run one subcommand.
pub fn run(cli: &Cli) -> CliResult<()> {
    if let Command::Keys = cli.command {
        for (k, v, _) in config::RawConfig::default().entries() {
            println!("{k} = {v}");
        }
        return Ok(());
    }
    let cfg = PipelineConfig::resolve(cli.options.config.as_deref(), &cli.options.overrides())?;
    let written = match cli.command {
        Command::Preprocess => cmd_preprocess(&cfg)?,
        Command::Infer => cmd_infer(&cfg)?,
        Command::Refine => cmd_refine(&cfg)?.mask_path,
        Command::Evaluate => cmd_evaluate(&cfg)?,
        Command::Phantom => cmd_phantom(&cfg)?.volume,
        Command::InitWeights => cmd_init_weights(&cfg)?,
        Command::Keys => unreachable!(),
    };
    log::info!("wrote {}", written.display());
    Ok(())
}
