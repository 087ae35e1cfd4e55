#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

mod commands;
mod plots;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crossmodal_core::pipeline::Baseline;
use crossmodal_core::{Error, ModalitySubset};

#[derive(Parser, Debug)]
#[command(name = "crossmodal", version, about = "Cross-modality policy transfer through a shared latent space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Config file, or one of the presets pendulum, pendulum-desk, hyperhot, hyperhot-desk.
    #[arg(long, default_value = "pendulum")]
    pub config: String,
    /// Run seed. Defaults to the dataset seed for data and perception
    /// commands and to the first pipeline seed for policy commands.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Artifact root. Every run writes into a new time-stamped directory below it.
    #[arg(long, env = "CROSSMODAL_ARTIFACTS", default_value = "artifacts")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Collect a paired image/sound dataset with a random controller.
    Collect {
        #[command(flatten)]
        common: Common,
        /// Number of samples (overrides avae.dataset_size).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train the perception model on a collected dataset.
    TrainPerception {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Overrides avae.epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train a policy on latent codes of one modality, or a native baseline.
    TrainPolicy {
        #[command(flatten)]
        common: Common,
        /// Trained perception model; required unless --baseline is given.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Overrides pipeline.train_modality.
        #[arg(long, value_parser = parse_subset)]
        train_modality: Option<ModalitySubset>,
        /// native-sound or native-image.
        #[arg(long, value_parser = parse_baseline)]
        baseline: Option<Baseline>,
        /// Dataset whose sound statistics scale native sound observations.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Overrides agent.max_frames.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Evaluate a policy zero-shot through another modality, or a baseline.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        agent: Option<PathBuf>,
        #[arg(long, value_parser = parse_subset)]
        train_modality: Option<ModalitySubset>,
        #[arg(long, value_parser = parse_subset)]
        test_modality: Option<ModalitySubset>,
        /// random, native-sound or native-image. Native baselines train
        /// first unless --agent is given.
        #[arg(long, value_parser = parse_baseline)]
        baseline: Option<Baseline>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Overrides pipeline.eval_episodes.
        #[arg(long)]
        episodes: Option<usize>,
        /// Overrides agent.max_frames when a baseline trains.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Summarize transfer reports as a markdown table and figures.
    Report {
        #[command(flatten)]
        common: Common,
        /// TransferReport JSON files; reports with the same method are pooled.
        #[arg(long, num_args = 1..)]
        reports: Vec<PathBuf>,
        /// Training logs to draw as learning curves.
        #[arg(long, num_args = 1..)]
        logs: Vec<PathBuf>,
        /// Perception loss CSV to draw as a stacked curve.
        #[arg(long)]
        loss: Option<PathBuf>,
    },
    /// Write the sound heard by each receiver during a random episode as WAVE files.
    AudioDump {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 60)]
        frames: usize,
        /// Also write the image frames as PNG.
        #[arg(long)]
        images: bool,
    },
}

fn parse_subset(s: &str) -> Result<ModalitySubset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_baseline(s: &str) -> Result<Baseline, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::MissingArtifact(_)) => 3,
        Some(Error::Config(_) | Error::Parse { .. } | Error::ModalityUnavailable(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Collect { common, samples } => commands::collect(&common, samples),
        Command::TrainPerception { common, dataset, epochs } => commands::train_perception(&common, &dataset, epochs),
        Command::TrainPolicy {
            common,
            model,
            train_modality,
            baseline,
            dataset,
            frames,
        } => commands::train_policy(
            &common,
            commands::PolicyArgs {
                model,
                train_modality,
                baseline,
                dataset,
                frames,
            },
        ),
        Command::Evaluate {
            common,
            model,
            agent,
            train_modality,
            test_modality,
            baseline,
            dataset,
            episodes,
            frames,
        } => commands::evaluate(
            &common,
            commands::EvalArgs {
                model,
                agent,
                train_modality,
                test_modality,
                baseline,
                dataset,
                episodes,
                frames,
            },
        ),
        Command::Report {
            common,
            reports,
            logs,
            loss,
        } => commands::report(&common, &reports, &logs, loss.as_deref()),
        Command::AudioDump { common, frames, images } => commands::audio_dump(&common, frames, images),
    };
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
