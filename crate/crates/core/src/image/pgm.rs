use std::io;
use std::path::Path;

use super::FlowImage;

pub const PGM_HEADER: &[u8] = b"P5\n28 28\n255\n";

/// Binary (P5) PGM encoding of a flow image.
pub fn pgm_bytes(img: &FlowImage) -> Vec<u8> {
    let mut out = PGM_HEADER.to_vec();
    out.extend_from_slice(img.as_bytes());
    out
}

pub fn export_pgm(img: &FlowImage, path: &Path) -> io::Result<()> {
    std::fs::write(path, pgm_bytes(img))
}
