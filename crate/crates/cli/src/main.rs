use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mirror_cli::{pipeline, CliError, PipelineConfig};

#[derive(Parser)]
#[command(name = "issue-mirror", version, about = "Mirror real issues into executable gyms")]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, env = "ISSUE_MIRROR_CONFIG", default_value = "mirror.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine candidate pull requests and filter them.
    Collect,
    /// Mirror accepted candidates into their gyms.
    Mirror,
    /// Execute mirrored attempts and judge them.
    Verify,
    /// Deduplicate verified instances and write the dataset.
    Assemble,
    /// Print dataset statistics.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Apply a loss-masking strategy to agent trajectories.
    Mask {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "error-masking")]
        strategy: String,
        #[arg(long)]
        output: PathBuf,
        /// Keep only successful trajectories of instances in this dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// JSON file with error observation prefixes.
        #[arg(long)]
        signatures: Option<PathBuf>,
    },
    /// Score the candidate filters against a labeled set.
    EvalFilter {
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        readme: Option<PathBuf>,
        #[arg(long)]
        tests: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    let cfg = || PipelineConfig::load(&cli.config);
    match &cli.command {
        Command::Collect => pipeline::collect(&cfg()?),
        Command::Mirror => pipeline::mirror(&cfg()?),
        Command::Verify => pipeline::verify(&cfg()?),
        Command::Assemble => pipeline::assemble(&cfg()?),
        Command::Stats { dataset, json } => pipeline::stats(dataset, *json),
        Command::Mask {
            input,
            strategy,
            output,
            dataset,
            signatures,
        } => pipeline::mask(input, strategy, output, dataset.as_deref(), signatures.as_deref()),
        Command::EvalFilter {
            labeled,
            readme,
            tests,
            output,
        } => pipeline::eval_filter(&cfg()?, labeled, readme.as_deref(), tests.as_deref(), output.as_deref())
            .map(|e| e.render()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
