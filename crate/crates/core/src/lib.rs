//! Hybrid network-traffic and call-graph feature pipeline for Android
//! malware detection (benign vs. malicious) and categorization (five
//! families).
//!
//! * [`pcap`]: classic pcap parsing and 5-tuple flow grouping
//! * [`image`]: 784-byte flow records, 28×28 images, IDX corpora
//! * [`nn`]: tensors, layers, Adam, gradient checking, checkpoints
//! * [`encoder`]: CNN flow-image encoder and bidirectional LSTM over captures
//! * [`code`]: opcode skip-gram, function embeddings, structure2vec
//! * [`fusion`]: feature fusion, MLP heads, random forest, metrics
//! * [`synth`]: deterministic synthetic fixtures

pub mod image;
pub mod nn;
pub mod pcap;
pub mod synth;
pub mod encoder;
pub mod training;
pub mod code;
pub mod fusion;
