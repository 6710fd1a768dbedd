//! Late fusion of the network and code features, the classification heads
//! and the evaluation metrics.

mod features;
mod forest;
mod metrics;
mod mlp;

pub use features::{read_feature_csv, write_feature_csv, FeatureTable};
pub use forest::{predict_forest, train_forest, ForestModel, ForestParams, MaxFeatures, Node, Tree};
pub use metrics::{evaluate, ClassMetrics, Metrics};
pub use mlp::{
    argmax, train_categorizer, train_detector, train_head, MlpCache, MlpHead, MlpTrainConfig, Targets, Verdict,
    DEFAULT_HEAD_WIDTH,
};

use log::warn;
use thiserror::Error;

use crate::image::ClassLabel;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("training data holds fewer than two classes")]
    DegenerateLabels,
    #[error("invalid label {0}")]
    BadLabel(i64),
    #[error("unknown family {0:?}")]
    UnknownFamily(String),
    #[error("invalid hyperparameters: {0}")]
    BadHyperparameters(String),
    #[error("parameters became non-finite in epoch {0}")]
    NonFinite(usize),
    #[error("feature file: {0}")]
    Format(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Network feature followed by graph vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeature(pub Vec<f64>);

/// Concatenates `net` and `code` after checking both against the
/// configured widths.
pub fn fuse(net: &[f64], code: &[f64], net_dim: usize, code_dim: usize) -> Result<FusedFeature, FusionError> {
    if net.len() != net_dim {
        return Err(FusionError::DimMismatch { expected: net_dim, got: net.len() });
    }
    if code.len() != code_dim {
        return Err(FusionError::DimMismatch { expected: code_dim, got: code.len() });
    }
    let mut v = Vec::with_capacity(net_dim + code_dim);
    v.extend_from_slice(net);
    v.extend_from_slice(code);
    Ok(FusedFeature(v))
}

/// One-vs-rest labels: 1 for `family`, 0 otherwise.
pub fn relabel_top_n(labels: &[ClassLabel], family: ClassLabel) -> Vec<u8> {
    let out: Vec<u8> = labels.iter().map(|&l| (l == family) as u8).collect();
    if !out.contains(&1) {
        warn!("family {} does not occur in the labels", family.name());
    }
    out
}

/// [`relabel_top_n`] with the family given by name or id.
pub fn relabel_top_n_named(labels: &[ClassLabel], family: &str) -> Result<Vec<u8>, FusionError> {
    let fam: ClassLabel = family.parse().map_err(|_| FusionError::UnknownFamily(family.to_string()))?;
    Ok(relabel_top_n(labels, fam))
}

/// ±1 detection label: benign is −1, every malware family +1.
pub fn detection_label(label: ClassLabel) -> i8 {
    if label == ClassLabel::Benign {
        -1
    } else {
        1
    }
}
