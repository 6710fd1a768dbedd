//! `malscope` command-line driver. Each subcommand wraps one pipeline
//! stage, reads its inputs from files and writes its outputs plus a
//! `manifest.json` into a fresh run directory.

pub mod commands;
pub mod config;
pub mod run;
pub mod tables;

use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{Overrides, PipelineConfig};

/// Usage errors exit with 1, data and model errors with 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn io(path: &Path, e: impl Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

macro_rules! data_error {
    ($($t:ty),* $(,)?) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(
    malscope_core::pcap::PcapError,
    malscope_core::image::ImageError,
    malscope_core::image::IdxError,
    malscope_core::nn::NnError,
    malscope_core::encoder::EncoderError,
    malscope_core::code::CodeError,
    malscope_core::fusion::FusionError,
);

#[derive(Debug, Parser)]
#[command(name = "malscope", version, about = "Traffic and call-graph malware feature pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file (flat keys)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. --set cnn_epochs=5
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Master seed (falls back to $FALCON_SEED, then 0)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parent directory for run directories
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for per-file stages
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Literal LSTM cell update with the extra sigmoid
    #[arg(long, global = true)]
    pub paper_cell: bool,
    /// No hidden activation in the MLP heads
    #[arg(long, global = true)]
    pub linear_head: bool,
    /// Drop IP/transport headers from flow records
    #[arg(long, global = true)]
    pub payload_only: bool,
    /// Random initial structure2vec node states
    #[arg(long, global = true)]
    pub random_init: bool,
    /// One flow per direction instead of per session
    #[arg(long, global = true)]
    pub unidirectional: bool,
}

impl GlobalArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            file: self.config.clone(),
            set: self.set.clone(),
            seed: self.seed,
            out: self.out.clone(),
            paper_cell: self.paper_cell,
            linear_head: self.linear_head,
            payload_only: self.payload_only,
            random_init: self.random_init,
            unidirectional: self.unidirectional,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split captures into one pcap file per flow
    #[command(name = "split")]
    Split(commands::flows::SplitArgs),
    /// Render every flow of a capture as a 28x28 PGM image
    #[command(name = "imageize")]
    Imageize(commands::flows::ImageizeArgs),
    /// Build an IDX image corpus from labeled captures
    #[command(name = "build-corpus")]
    BuildCorpus(commands::flows::BuildCorpusArgs),
    /// Pretrain the flow-image CNN
    #[command(name = "train-cnn")]
    TrainCnn(commands::network::TrainCnnArgs),
    /// Flow vectors per capture, or capture features with --bilstm
    #[command(name = "embed-net")]
    EmbedNet(commands::network::EmbedNetArgs),
    /// Train the bidirectional LSTM on flow-vector sequences
    #[command(name = "train-bilstm")]
    TrainBilstm(commands::network::TrainBilstmArgs),
    /// Train skip-gram opcode vectors on call-graph files
    #[command(name = "train-opcode2vec")]
    TrainOpcode2vec(commands::code::TrainOpcode2vecArgs),
    /// Graph features through structure2vec, optionally training it
    #[command(name = "embed-code")]
    EmbedCode(commands::code::EmbedCodeArgs),
    /// Fit the fused classifier (random forest or MLP head)
    #[command(name = "train-fusion")]
    TrainFusion(commands::fusion::TrainFusionArgs),
    /// Apply a trained model to feature or flow-vector files
    #[command(name = "predict")]
    Predict(commands::fusion::PredictArgs),
    /// Accuracy, weighted precision/recall/F1 and confusion matrix
    #[command(name = "evaluate")]
    Evaluate(commands::fusion::EvaluateArgs),
    /// Generate deterministic synthetic inputs
    #[command(name = "synth")]
    Synth(commands::synth::SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Split(_) => "split",
            Command::Imageize(_) => "imageize",
            Command::BuildCorpus(_) => "build-corpus",
            Command::TrainCnn(_) => "train-cnn",
            Command::EmbedNet(_) => "embed-net",
            Command::TrainBilstm(_) => "train-bilstm",
            Command::TrainOpcode2vec(_) => "train-opcode2vec",
            Command::EmbedCode(_) => "embed-code",
            Command::TrainFusion(_) => "train-fusion",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::Synth(_) => "synth",
        }
    }
}

/// Runs one parsed invocation and returns its run directory.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let cfg = PipelineConfig::load(&cli.global.overrides())?;
    if cli.global.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.global.jobs).build_global();
    let args = format!("{:?}", cli.command);
    let name = cli.command.name();
    match &cli.command {
        Command::Split(a) => commands::flows::split(name, args, &cfg, a),
        Command::Imageize(a) => commands::flows::imageize(name, args, &cfg, a),
        Command::BuildCorpus(a) => commands::flows::build_corpus(name, args, &cfg, a),
        Command::TrainCnn(a) => commands::network::train_cnn(name, args, &cfg, a),
        Command::EmbedNet(a) => commands::network::embed_net(name, args, &cfg, a),
        Command::TrainBilstm(a) => commands::network::train_bilstm(name, args, &cfg, a),
        Command::TrainOpcode2vec(a) => commands::code::train_opcode2vec(name, args, &cfg, a),
        Command::EmbedCode(a) => commands::code::embed_code(name, args, &cfg, a),
        Command::TrainFusion(a) => commands::fusion::train_fusion(name, args, &cfg, a),
        Command::Predict(a) => commands::fusion::predict(name, args, &cfg, a),
        Command::Evaluate(a) => commands::fusion::evaluate(name, args, &cfg, a),
        Command::Synth(a) => commands::synth::synth(name, args, &cfg, a),
    }
}

/// Parses `argv`, runs, prints the run directory and returns the exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
