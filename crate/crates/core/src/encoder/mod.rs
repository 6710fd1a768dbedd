//! Dynamic (network) feature branch.
//!
//! A small CNN is pretrained to classify single flow images; its 32-wide
//! fc1 activation is the per-flow vector. A bidirectional LSTM then reads a
//! capture's flow vectors in first-packet order and the concatenation of
//! both final hidden states is the capture's network feature.

mod bilstm;
mod cnn;

pub use bilstm::{
    apply_cap, encode_capture, encode_capture_capped, train_bilstm, BiLstmCache, BiLstmModel, BiLstmTrainConfig,
    DEFAULT_HIDDEN, DEFAULT_SEQUENCE_CAP,
};
pub use cnn::{
    evaluate_cnn, img2vec, img2vec_batch, train_cnn, CnnCache, CnnConfig, CnnModel, CnnTrainConfig, CnnTrainReport,
};

use thiserror::Error;

use crate::image::{capture_images, ClassLabel};
use crate::nn::NnError;
use crate::pcap::{CaptureSet, PcapError};

/// Width of the CNN flow feature.
pub const FEATURE_DIM: usize = 32;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("image corpus is empty")]
    EmptyCorpus,
    #[error("capture sequence is empty")]
    EmptySequence,
    #[error("no training sequences")]
    EmptyDataset,
    #[error("capture {0:?} has no flows")]
    EmptyCapture(String),
    #[error("training data holds fewer than two classes")]
    DegenerateLabels,
    #[error("capture yields no TCP/UDP flows")]
    NoFlows,
    #[error("flow vector must have {FEATURE_DIM} values, got {0}")]
    BadVectorLength(usize),
    #[error("parameters became non-finite in epoch {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pcap(#[from] PcapError),
}

/// The 32-d CNN feature of one flow image.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowVector(Vec<f64>);

impl FlowVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EncoderError> {
        if values.len() != FEATURE_DIM {
            return Err(EncoderError::BadVectorLength(values.len()));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for FlowVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Flow vectors of one capture in first-packet order.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureSequence {
    pub source_name: String,
    pub vectors: Vec<FlowVector>,
    pub label: ClassLabel,
}

/// concat(h_forward_last, h_backward_last), length 2H.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkFeature(pub Vec<f64>);

impl NetworkFeature {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowOptions {
    pub bidirectional: bool,
    pub payload_only: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            bidirectional: true,
            payload_only: false,
        }
    }
}

/// parse → split → serialize → normalize → image → img2vec → bi-LSTM for
/// one in-memory capture.
pub fn network_feature_pipeline(
    source_name: &str,
    raw_pcap: &[u8],
    cnn: &CnnModel,
    bilstm: &BiLstmModel,
    opts: FlowOptions,
) -> Result<NetworkFeature, EncoderError> {
    let (capture, _) = CaptureSet::from_pcap(source_name, raw_pcap, opts.bidirectional)?;
    if capture.flows.is_empty() {
        return Err(EncoderError::NoFlows);
    }
    let images = capture_images(&capture.flows, opts.payload_only);
    let seq = CaptureSequence {
        source_name: source_name.to_string(),
        vectors: img2vec_batch(cnn, &images),
        label: ClassLabel::Benign,
    };
    encode_capture(bilstm, &seq)
}

/// [`network_feature_pipeline`] on a capture file.
pub fn network_feature_from_path(
    path: &std::path::Path,
    cnn: &CnnModel,
    bilstm: &BiLstmModel,
    opts: FlowOptions,
) -> Result<NetworkFeature, Box<dyn std::error::Error + Send + Sync>> {
    let raw = std::fs::read(path)?;
    Ok(network_feature_pipeline(&path.display().to_string(), &raw, cnn, bilstm, opts)?)
}
