//! Flow-to-image conversion and MNIST-style corpus persistence.
//!
//! A flow is serialized as its 13-byte canonical tuple followed by the
//! captured bytes of every packet (from the IP header on), trimmed or
//! zero-padded to 784 bytes, and viewed as a 28×28 grayscale raster.

mod corpus;
mod idx;
mod pgm;

pub use corpus::{CaptureRange, ImageCorpus};
pub use idx::{
    decode_idx_images, decode_idx_labels, encode_idx_images, encode_idx_labels, manifest_path_for, read_idx,
    read_manifest, write_idx, write_manifest, IdxError, IMAGE_MAGIC, LABEL_MAGIC,
};
pub use pgm::{export_pgm, pgm_bytes, PGM_HEADER};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::pcap::{Flow, PROTO_TCP};

pub const SIDE: usize = 28;
pub const RECORD_LEN: usize = SIDE * SIDE;
pub const NUM_CLASSES: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("record must be {RECORD_LEN} bytes, got {0}")]
    BadLength(usize),
    #[error("unknown class label {0:?}")]
    UnknownLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ClassLabel {
    Benign = 0,
    Adware = 1,
    Ransomware = 2,
    Scareware = 3,
    SmsMalware = 4,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [
        ClassLabel::Benign,
        ClassLabel::Adware,
        ClassLabel::Ransomware,
        ClassLabel::Scareware,
        ClassLabel::SmsMalware,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Benign => "Benign",
            ClassLabel::Adware => "Adware",
            ClassLabel::Ransomware => "Ransomware",
            ClassLabel::Scareware => "Scareware",
            ClassLabel::SmsMalware => "SMSmalware",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accepts the class name (case-insensitive) or its numeric id.
impl FromStr for ClassLabel {
    type Err = ImageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if let Ok(id) = t.parse::<u8>() {
            return Self::from_id(id).ok_or_else(|| ImageError::UnknownLabel(s.to_string()));
        }
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| ImageError::UnknownLabel(s.to_string()))
    }
}

/// A 784-byte flow record with its provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRecord {
    pub bytes: [u8; RECORD_LEN],
    pub label: ClassLabel,
    pub source_name: String,
    pub flow_index: usize,
}

/// 28×28 grayscale raster, row-major. 0x00 is black, 0xff white.
#[derive(Clone, PartialEq, Eq)]
pub struct FlowImage {
    pixels: [u8; RECORD_LEN],
}

impl fmt::Debug for FlowImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nonzero = self.pixels.iter().filter(|&&p| p != 0).count();
        write!(f, "FlowImage {{ nonzero: {nonzero} }}")
    }
}

impl FlowImage {
    pub fn from_pixels(pixels: [u8; RECORD_LEN]) -> Self {
        Self { pixels }
    }

    pub fn zeros() -> Self {
        Self { pixels: [0; RECORD_LEN] }
    }

    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * SIDE + col]
    }

    pub fn as_bytes(&self) -> &[u8; RECORD_LEN] {
        &self.pixels
    }

    /// Pixels scaled to [0, 1].
    pub fn to_unit(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }
}

/// Tuple header plus every packet's captured bytes, in flow order.
///
/// With `payload_only`, IP and transport headers are dropped from each
/// packet; the tuple header is kept.
pub fn serialize_flow(flow: &Flow, payload_only: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + flow.byte_count());
    out.extend_from_slice(&flow.key.encode());
    for p in &flow.packets {
        if payload_only {
            out.extend_from_slice(&p.bytes[payload_offset(&p.bytes, p.tuple.protocol).min(p.bytes.len())..]);
        } else {
            out.extend_from_slice(&p.bytes);
        }
    }
    out
}

fn payload_offset(ip: &[u8], protocol: u8) -> usize {
    let ihl = ((ip[0] & 0x0f) as usize) * 4;
    if protocol == PROTO_TCP {
        let doff = ip.get(ihl + 12).map(|b| (b >> 4) as usize * 4).unwrap_or(20);
        ihl + doff
    } else {
        ihl + 8
    }
}

/// Trims to, or zero-pads up to, exactly 784 bytes.
pub fn normalize_784(raw: &[u8]) -> [u8; RECORD_LEN] {
    let mut out = [0u8; RECORD_LEN];
    let n = raw.len().min(RECORD_LEN);
    out[..n].copy_from_slice(&raw[..n]);
    out
}

pub fn to_image(record: &[u8]) -> Result<FlowImage, ImageError> {
    let pixels: [u8; RECORD_LEN] = record.try_into().map_err(|_| ImageError::BadLength(record.len()))?;
    Ok(FlowImage { pixels })
}

/// serialize → normalize → image for every flow of a capture, in flow order.
pub fn capture_images(flows: &[Flow], payload_only: bool) -> Vec<FlowImage> {
    flows
        .iter()
        .map(|f| FlowImage::from_pixels(normalize_784(&serialize_flow(f, payload_only))))
        .collect()
}
