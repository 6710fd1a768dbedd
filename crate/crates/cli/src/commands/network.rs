use std::path::{Path, PathBuf};

use clap::Args;
use log::info;
use malscope_core::encoder::{
    encode_capture_capped, img2vec_batch, BiLstmModel, CaptureSequence, CnnModel,
};
use malscope_core::fusion::FeatureTable;
use malscope_core::image::{read_idx, ImageCorpus};
use malscope_core::nn::Checkpoint;
use malscope_core::training::log_csv;
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::run::Run;
use crate::tables::{flow_vectors_csv, read_flow_vectors};
use crate::CliError;

#[derive(Debug, Args)]
pub struct TrainCnnArgs {
    /// Directory holding images.idx and labels.idx
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedNetArgs {
    /// Directory holding images.idx and labels.idx
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    /// Trained CNN checkpoint
    #[arg(long, value_name = "FILE")]
    pub cnn: PathBuf,
    /// Trained bi-LSTM checkpoint; emits one feature row per capture
    #[arg(long, value_name = "FILE")]
    pub bilstm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainBilstmArgs {
    /// Flow-vector CSV written by embed-net
    #[arg(long, value_name = "FILE")]
    pub vectors: PathBuf,
}

pub(crate) fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::load(path).map_err(|e| CliError::io(path, e))
}

fn load_corpus(dir: &Path) -> Result<ImageCorpus, CliError> {
    read_idx(&dir.join("images.idx"), &dir.join("labels.idx")).map_err(|e| CliError::io(dir, e))
}

pub fn train_cnn(name: &'static str, args: String, cfg: &PipelineConfig, a: &TrainCnnArgs) -> Result<PathBuf, CliError> {
    let train_cfg = cfg.cnn_train()?;
    let mut run = Run::start(name, args, cfg, &[&a.corpus])?;
    let corpus = load_corpus(&a.corpus)?;
    let (model, report) = run.time("train", || malscope_core::encoder::train_cnn(&corpus, &train_cfg))?;
    if let Some(last) = report.epochs.last() {
        info!(
            "cnn: initial loss {:.4}, final loss {:.4}, accuracy {:.4}",
            report.initial_loss, last.loss, last.accuracy
        );
    }
    run.write("cnn.ckpt", model.to_checkpoint().to_bytes())?;
    run.write("cnn_log.csv", log_csv(&report.epochs))?;
    run.finish()
}

/// Flow vectors of every capture in corpus order.
pub(crate) fn corpus_sequences(corpus: &ImageCorpus, cnn: &CnnModel) -> Vec<CaptureSequence> {
    (0..corpus.captures.len())
        .into_par_iter()
        .map(|i| {
            let (range, images, label) = corpus.capture(i);
            CaptureSequence {
                source_name: range.name.clone(),
                vectors: img2vec_batch(cnn, images),
                label: label.expect("corpus captures carry a label"),
            }
        })
        .collect()
}

pub fn embed_net(name: &'static str, args: String, cfg: &PipelineConfig, a: &EmbedNetArgs) -> Result<PathBuf, CliError> {
    let mut inputs: Vec<&Path> = vec![&a.corpus, &a.cnn];
    if let Some(b) = &a.bilstm {
        inputs.push(b);
    }
    let mut run = Run::start(name, args, cfg, &inputs)?;
    let corpus = load_corpus(&a.corpus)?;
    let cnn = CnnModel::from_checkpoint(&load_checkpoint(&a.cnn)?)?;
    let seqs = run.time("img2vec", || corpus_sequences(&corpus, &cnn));
    match &a.bilstm {
        None => {
            run.write("flow_vectors.csv", flow_vectors_csv(&seqs)?)?;
        }
        Some(path) => {
            let lstm = BiLstmModel::from_checkpoint(&load_checkpoint(path)?)?;
            let rows: Vec<Result<Vec<f64>, CliError>> = run.time("bilstm", || {
                seqs.par_iter()
                    .map(|s| Ok(encode_capture_capped(&lstm, s, cfg.lstm_cap)?.0))
                    .collect()
            });
            let mut table = FeatureTable::default();
            for (s, row) in seqs.iter().zip(rows) {
                table.push(s.source_name.clone(), s.label.id() as i64, row?);
            }
            run.write("network_features.csv", table.to_csv())?;
        }
    }
    info!("embedded {} captures", seqs.len());
    run.finish()
}

pub fn train_bilstm(name: &'static str, args: String, cfg: &PipelineConfig, a: &TrainBilstmArgs) -> Result<PathBuf, CliError> {
    let train_cfg = cfg.bilstm_train()?;
    let mut run = Run::start(name, args, cfg, &[&a.vectors])?;
    let seqs = read_flow_vectors(&a.vectors)?;
    let (model, log) = run.time("train", || malscope_core::encoder::train_bilstm(&seqs, &train_cfg))?;
    if let Some(last) = log.last() {
        info!("bilstm: final loss {:.4}, accuracy {:.4}", last.loss, last.accuracy);
    }
    run.write("bilstm.ckpt", model.to_checkpoint().to_bytes())?;
    run.write("bilstm_log.csv", log_csv(&log))?;
    run.finish()
}
