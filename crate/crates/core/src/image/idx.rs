//! IDX (MNIST) image/label file pair plus a text sidecar for capture ranges.
//!
//! Image file: magic 0x00000803, N, 28, 28 (big-endian u32), then N×784
//! pixel bytes. Label file: magic 0x00000801, N, then N label bytes.
//! Sidecar: one `name<TAB>start<TAB>count` line per capture.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{CaptureRange, ClassLabel, FlowImage, ImageCorpus, RECORD_LEN, SIDE};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad IDX magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label byte {0} is not a known class")]
    BadLabel(u8),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn be_u32(b: &[u8], at: usize) -> Result<u32, IdxError> {
    b.get(at..at + 4)
        .map(|s| u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| IdxError::DimMismatch(format!("header truncated at byte {at}")))
}

pub fn encode_idx_images(images: &[FlowImage]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * RECORD_LEN);
    for v in [IMAGE_MAGIC, images.len() as u32, SIDE as u32, SIDE as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img.as_bytes());
    }
    out
}

pub fn encode_idx_labels(labels: &[ClassLabel]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend(labels.iter().map(|l| l.id()));
    out
}

pub fn decode_idx_images(raw: &[u8]) -> Result<Vec<FlowImage>, IdxError> {
    let magic = be_u32(raw, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(IdxError::BadMagic {
            found: magic,
            expected: IMAGE_MAGIC,
        });
    }
    let n = be_u32(raw, 4)? as usize;
    let (rows, cols) = (be_u32(raw, 8)? as usize, be_u32(raw, 12)? as usize);
    if rows != SIDE || cols != SIDE {
        return Err(IdxError::DimMismatch(format!("images are {rows}x{cols}, expected 28x28")));
    }
    let body = &raw[16..];
    if body.len() != n * RECORD_LEN {
        return Err(IdxError::DimMismatch(format!(
            "header declares {n} images but body holds {} bytes",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(RECORD_LEN)
        .map(|c| FlowImage::from_pixels(c.try_into().expect("chunk is 784 bytes")))
        .collect())
}

pub fn decode_idx_labels(raw: &[u8]) -> Result<Vec<ClassLabel>, IdxError> {
    let magic = be_u32(raw, 0)?;
    if magic != LABEL_MAGIC {
        return Err(IdxError::BadMagic {
            found: magic,
            expected: LABEL_MAGIC,
        });
    }
    let n = be_u32(raw, 4)? as usize;
    let body = &raw[8..];
    if body.len() != n {
        return Err(IdxError::DimMismatch(format!(
            "header declares {n} labels but body holds {}",
            body.len()
        )));
    }
    body.iter()
        .map(|&b| ClassLabel::from_id(b).ok_or(IdxError::BadLabel(b)))
        .collect()
}

/// `<image_path>.manifest`
pub fn manifest_path_for(image_path: &Path) -> PathBuf {
    let mut s = image_path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

pub fn write_manifest(captures: &[CaptureRange], path: &Path) -> io::Result<()> {
    let mut text = String::new();
    for c in captures {
        text.push_str(&format!("{}\t{}\t{}\n", c.name, c.start, c.count));
    }
    fs::write(path, text)
}

pub fn read_manifest(path: &Path) -> Result<Vec<CaptureRange>, IdxError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let mut parts = line.rsplitn(3, '\t');
            let count = parts.next();
            let start = parts.next();
            let name = parts.next();
            match (name, start, count) {
                (Some(name), Some(start), Some(count)) => Ok(CaptureRange {
                    name: name.to_string(),
                    start: start.parse().map_err(|_| IdxError::Manifest(format!("line {}: bad start", i + 1)))?,
                    count: count.parse().map_err(|_| IdxError::Manifest(format!("line {}: bad count", i + 1)))?,
                }),
                _ => Err(IdxError::Manifest(format!("line {}: expected name, start, count", i + 1))),
            }
        })
        .collect()
}

/// Writes the IDX pair and the capture sidecar next to the image file.
pub fn write_idx(corpus: &ImageCorpus, image_path: &Path, label_path: &Path) -> Result<(), IdxError> {
    corpus.validate().map_err(IdxError::Manifest)?;
    fs::write(image_path, encode_idx_images(&corpus.images))?;
    fs::write(label_path, encode_idx_labels(&corpus.labels))?;
    write_manifest(&corpus.captures, &manifest_path_for(image_path))?;
    Ok(())
}

/// Reads an IDX pair. Without a sidecar the whole corpus is one capture.
pub fn read_idx(image_path: &Path, label_path: &Path) -> Result<ImageCorpus, IdxError> {
    let images = decode_idx_images(&fs::read(image_path)?)?;
    let labels = decode_idx_labels(&fs::read(label_path)?)?;
    if images.len() != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let manifest = manifest_path_for(image_path);
    let captures = if manifest.exists() {
        read_manifest(&manifest)?
    } else {
        vec![CaptureRange {
            name: image_path.display().to_string(),
            start: 0,
            count: images.len(),
        }]
    };
    let corpus = ImageCorpus {
        images,
        labels,
        captures,
    };
    corpus.validate().map_err(IdxError::Manifest)?;
    Ok(corpus)
}
