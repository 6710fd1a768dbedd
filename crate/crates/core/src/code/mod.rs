//! Static (code) feature branch: opcode vocabulary, skip-gram opcode
//! vectors, weighted-mean function vectors and structure2vec over the
//! function call graph.

mod fcg;
mod graph;
mod skipgram;
mod vocab;

pub use fcg::{parse_fcg, write_fcg, CallGraph, FunctionNode, GraphLabel, NeighborMode, RawGraph, RawNode, FCG_HEADER};
pub use graph::{
    embed_graphs, function2vec, node_features, train_graph_classifier, GraphEmbedParams, GraphTrainConfig, GraphVector,
    MuInit, OpcodeWeights, S2vCache, Weighting, SIF_A,
};
pub use skipgram::{cosine, train_skipgram, OpcodeEmbedding, SkipGramConfig};
pub use vocab::{build_vocab, histogram_csv, opcode_histogram, rank_frequency_slope, OpcodeVocab, MAX_OPCODES};

use thiserror::Error;

use crate::fusion::{FusionError, Targets};
use crate::image::NUM_CLASSES;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum CodeError {
    #[error("schema error at line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("corpus needs at least two distinct tokens")]
    DegenerateCorpus,
    #[error("token index {0} is outside the vocabulary")]
    BadIndex(usize),
    #[error("no training graphs")]
    EmptyDataset,
    #[error("graph labels are missing or mix ±1 with family names")]
    MixedLabels,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid graph parameters: {0}")]
    BadParams(String),
    #[error("parameters became non-finite in epoch {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Training targets from graph labels: ±1 labels give a detection task,
/// family labels the five-class task.
pub fn graph_targets(graphs: &[CallGraph]) -> Result<Targets, CodeError> {
    let labels: Vec<GraphLabel> = graphs.iter().map(|g| g.label.ok_or(CodeError::MixedLabels)).collect::<Result<_, _>>()?;
    if labels.iter().all(|l| matches!(l, GraphLabel::Sign(_))) {
        return Ok(Targets::Sign(
            labels
                .iter()
                .map(|l| match l {
                    GraphLabel::Sign(s) => *s,
                    GraphLabel::Family(_) => unreachable!(),
                })
                .collect(),
        ));
    }
    let ids = labels
        .iter()
        .map(|l| match l {
            GraphLabel::Family(c) => Ok(c.id() as usize),
            GraphLabel::Sign(_) => Err(CodeError::MixedLabels),
        })
        .collect::<Result<_, _>>()?;
    Ok(Targets::Class {
        labels: ids,
        classes: NUM_CLASSES,
    })
}
