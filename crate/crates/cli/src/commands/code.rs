use std::path::{Path, PathBuf};

use clap::Args;
use log::{info, warn};
use malscope_core::code::{
    build_vocab, embed_graphs, graph_targets, histogram_csv, train_graph_classifier, train_skipgram, CallGraph,
    GraphEmbedParams, GraphLabel, OpcodeEmbedding, OpcodeWeights, RawGraph,
};
use malscope_core::fusion::{FeatureTable, MlpHead};
use malscope_core::training::log_csv;
use rayon::prelude::*;

use super::files_with_ext;
use super::network::load_checkpoint;
use crate::config::{derive_seed, PipelineConfig};
use crate::run::Run;
use crate::tables::{check_field, stem};
use crate::CliError;

pub const GRAPH_EXTS: &[&str] = &["fcg", "json"];

#[derive(Debug, Args)]
pub struct TrainOpcode2vecArgs {
    /// Directory of call-graph files (.fcg or .json)
    #[arg(long, value_name = "DIR")]
    pub graphs: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedCodeArgs {
    /// Directory of call-graph files (.fcg or .json)
    #[arg(long, value_name = "DIR")]
    pub graphs: PathBuf,
    /// Opcode embedding checkpoint from train-opcode2vec
    #[arg(long, value_name = "FILE")]
    pub opcode2vec: PathBuf,
    /// Trained structure2vec checkpoint
    #[arg(long, value_name = "FILE", conflicts_with = "train")]
    pub s2v: Option<PathBuf>,
    /// Train structure2vec with a classifier head on the graph labels first
    #[arg(long)]
    pub train: bool,
}

fn load_graphs(dir: &Path) -> Result<Vec<(String, RawGraph)>, CliError> {
    let files = files_with_ext(dir, GRAPH_EXTS)?;
    let parsed: Vec<Result<(String, RawGraph), CliError>> = files
        .par_iter()
        .map(|f| {
            let text = std::fs::read_to_string(f).map_err(|e| CliError::io(f, e))?;
            let g = RawGraph::parse(&text).map_err(|e| CliError::io(f, e))?;
            let id = stem(f);
            check_field(&id)?;
            Ok((id, g))
        })
        .collect();
    parsed.into_iter().collect()
}

pub fn train_opcode2vec(
    name: &'static str,
    args: String,
    cfg: &PipelineConfig,
    a: &TrainOpcode2vecArgs,
) -> Result<PathBuf, CliError> {
    let mut run = Run::start(name, args, cfg, &[&a.graphs])?;
    let graphs = load_graphs(&a.graphs)?;
    let vocab = build_vocab(graphs.iter().flat_map(|(_, g)| g.opcode_sequences()));
    let corpus: Vec<Vec<usize>> = graphs
        .iter()
        .flat_map(|(_, g)| g.opcode_sequences())
        .map(|seq| seq.iter().map(|op| vocab.index_of(op)).collect())
        .collect();
    let sg = cfg.skipgram();
    let emb = run.time("train", || train_skipgram(&corpus, &vocab, &sg))?;
    info!("opcode2vec: {} mnemonics, {} tokens, dim {}", vocab.len(), vocab.total(), emb.dim());
    run.write("opcode2vec.ckpt", emb.to_checkpoint(&vocab).to_bytes())?;
    run.write("opcode_histogram.csv", histogram_csv(&vocab))?;
    run.finish()
}

/// Feature-table label: class id for families, ±1 for detection labels.
fn table_label(id: &str, label: Option<GraphLabel>) -> i64 {
    match label {
        Some(GraphLabel::Family(c)) => c.id() as i64,
        Some(GraphLabel::Sign(s)) => s as i64,
        None => {
            warn!("{id}: graph has no label, written as 0");
            0
        }
    }
}

pub fn embed_code(name: &'static str, args: String, cfg: &PipelineConfig, a: &EmbedCodeArgs) -> Result<PathBuf, CliError> {
    let mut inputs: Vec<&Path> = vec![&a.graphs, &a.opcode2vec];
    if let Some(s) = &a.s2v {
        inputs.push(s);
    }
    let mut run = Run::start(name, args, cfg, &inputs)?;
    let (emb, vocab) = OpcodeEmbedding::from_checkpoint(&load_checkpoint(&a.opcode2vec)?)?;
    let raw = load_graphs(&a.graphs)?;
    let mut oov = 0;
    let graphs: Vec<CallGraph> = raw
        .iter()
        .map(|(_, g)| {
            let (g, n) = g.resolve(&vocab);
            oov += n;
            g
        })
        .collect();
    if oov > 0 {
        info!("{oov} opcode occurrences are outside the vocabulary");
    }
    let weights = OpcodeWeights::new(cfg.weighting()?, &vocab);
    let params = if a.train {
        let targets = graph_targets(&graphs)?;
        let mut params = GraphEmbedParams::init(
            emb.dim(),
            cfg.graph_p,
            cfg.graph_layers,
            cfg.graph_rounds,
            derive_seed(cfg.seed, "s2v"),
        );
        params.neighbor = cfg.neighbor()?;
        params.mu_init = cfg.mu_init()?;
        let head = MlpHead::init(
            cfg.graph_p,
            cfg.head_width,
            targets.outputs(),
            cfg.head_linear,
            derive_seed(cfg.seed, "graph-head"),
        );
        let gcfg = cfg.graph_train();
        let (params, head, log) =
            run.time("train", || train_graph_classifier(&graphs, &targets, &emb, &weights, params, head, &gcfg))?;
        if let Some(last) = log.last() {
            info!("structure2vec: final loss {:.4}, accuracy {:.4}", last.loss, last.accuracy);
        }
        run.write("s2v.ckpt", params.to_checkpoint().to_bytes())?;
        run.write("graph_head.ckpt", head.to_checkpoint().to_bytes())?;
        run.write("graph_log.csv", log_csv(&log))?;
        params
    } else if let Some(path) = &a.s2v {
        GraphEmbedParams::from_checkpoint(&load_checkpoint(path)?)?
    } else {
        warn!("no --s2v checkpoint and no --train: embedding with untrained structure2vec weights");
        let mut params = GraphEmbedParams::init(
            emb.dim(),
            cfg.graph_p,
            cfg.graph_layers,
            cfg.graph_rounds,
            derive_seed(cfg.seed, "s2v"),
        );
        params.neighbor = cfg.neighbor()?;
        params.mu_init = cfg.mu_init()?;
        params
    };
    let vectors = run.time("embed", || embed_graphs(&graphs, &params, &emb, &weights))?;
    let mut table = FeatureTable::default();
    for (((id, _), g), v) in raw.iter().zip(&graphs).zip(vectors) {
        table.push(id.clone(), table_label(id, g.label), v.0);
    }
    run.write("code_features.csv", table.to_csv())?;
    run.finish()
}
