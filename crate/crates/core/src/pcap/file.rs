use thiserror::Error;

use super::Timestamp;

pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW: u32 = 101;

const MAGIC_USEC: u32 = 0xa1b2_c3d4;
const MAGIC_NSEC: u32 = 0xa1b2_3c4d;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PcapError {
    #[error("unknown pcap magic 0x{0:08x}")]
    BadMagic(u32),
    #[error("truncated {what} at offset {offset}: need {need} bytes, have {have}")]
    Truncated {
        what: &'static str,
        offset: usize,
        need: usize,
        have: usize,
    },
}

/// A raw capture record, link layer still attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcapRecord {
    pub time: Timestamp,
    pub link_type: u32,
    pub data: Vec<u8>,
    pub orig_len: u32,
}

#[derive(Clone, Copy)]
enum Order {
    Little,
    Big,
}

impl Order {
    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            Order::Little => u32::from_le_bytes(a),
            Order::Big => u32::from_be_bytes(a),
        }
    }
}

fn need(raw: &[u8], offset: usize, len: usize, what: &'static str) -> Result<(), PcapError> {
    let have = raw.len().saturating_sub(offset);
    if have < len {
        return Err(PcapError::Truncated {
            what,
            offset,
            need: len,
            have,
        });
    }
    Ok(())
}

/// Parses a whole classic pcap file held in memory.
///
/// Records are returned in file order. Nanosecond timestamps are truncated
/// to microseconds.
pub fn parse_pcap(raw: &[u8]) -> Result<Vec<PcapRecord>, PcapError> {
    need(raw, 0, GLOBAL_HEADER_LEN, "global header")?;
    let le = u32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]);
    let (order, nanos) = match le {
        MAGIC_USEC => (Order::Little, false),
        MAGIC_NSEC => (Order::Little, true),
        m if m.swap_bytes() == MAGIC_USEC => (Order::Big, false),
        m if m.swap_bytes() == MAGIC_NSEC => (Order::Big, true),
        _ => return Err(PcapError::BadMagic(u32::from_be_bytes([raw[0], raw[1], raw[2], raw[3]]))),
    };
    let link_type = order.u32(&raw[20..24]);

    let mut records = Vec::new();
    let mut off = GLOBAL_HEADER_LEN;
    while off < raw.len() {
        need(raw, off, RECORD_HEADER_LEN, "record header")?;
        let secs = order.u32(&raw[off..]);
        let frac = order.u32(&raw[off + 4..]);
        let incl_len = order.u32(&raw[off + 8..]) as usize;
        let orig_len = order.u32(&raw[off + 12..]);
        off += RECORD_HEADER_LEN;
        need(raw, off, incl_len, "record body")?;
        let micros = if nanos { frac / 1000 } else { frac };
        records.push(PcapRecord {
            time: Timestamp::new(secs, micros),
            link_type,
            data: raw[off..off + incl_len].to_vec(),
            orig_len,
        });
        off += incl_len;
    }
    Ok(records)
}

/// Writes records as a little-endian, microsecond-resolution pcap file.
///
/// Every record must share `link_type`; the value in each record is ignored.
pub fn write_pcap<'a, I>(records: I, link_type: u32) -> Vec<u8>
where
    I: IntoIterator<Item = &'a PcapRecord>,
{
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC_USEC.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&65_535u32.to_le_bytes());
    out.extend_from_slice(&link_type.to_le_bytes());
    for r in records {
        out.extend_from_slice(&r.time.secs.to_le_bytes());
        out.extend_from_slice(&r.time.micros.to_le_bytes());
        out.extend_from_slice(&(r.data.len() as u32).to_le_bytes());
        out.extend_from_slice(&r.orig_len.to_le_bytes());
        out.extend_from_slice(&r.data);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: [u8; 4], big: bool, link: u32) -> Vec<u8> {
        let mut h = magic.to_vec();
        let rest: [u32; 4] = [0, 0, 65535, link];
        h.extend_from_slice(&if big { [0, 2, 0, 4] } else { [2, 0, 4, 0] });
        for v in rest {
            h.extend_from_slice(&if big { v.to_be_bytes() } else { v.to_le_bytes() });
        }
        h
    }

    #[test]
    fn empty_capture_has_no_records() {
        let raw = header([0xd4, 0xc3, 0xb2, 0xa1], false, 1);
        assert!(parse_pcap(&raw).unwrap().is_empty());
    }

    #[test]
    fn unknown_magic_is_rejected() {
        let mut raw = header([0xde, 0xad, 0xbe, 0xef], false, 1);
        raw.truncate(24);
        assert_eq!(parse_pcap(&raw), Err(PcapError::BadMagic(0xdeadbeef)));
    }

    #[test]
    fn big_endian_nanosecond_file() {
        let mut raw = header([0xa1, 0xb2, 0x3c, 0x4d], true, 101);
        raw.extend_from_slice(&7u32.to_be_bytes());
        raw.extend_from_slice(&123_456_789u32.to_be_bytes());
        raw.extend_from_slice(&3u32.to_be_bytes());
        raw.extend_from_slice(&60u32.to_be_bytes());
        raw.extend_from_slice(&[1, 2, 3]);
        let recs = parse_pcap(&raw).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].time, Timestamp::new(7, 123_456));
        assert_eq!(recs[0].link_type, 101);
        assert_eq!(recs[0].data, vec![1, 2, 3]);
        assert_eq!(recs[0].orig_len, 60);
    }

    #[test]
    fn truncated_record_body() {
        let mut raw = header([0xd4, 0xc3, 0xb2, 0xa1], false, 1);
        raw.extend_from_slice(&1u32.to_le_bytes());
        raw.extend_from_slice(&0u32.to_le_bytes());
        raw.extend_from_slice(&10u32.to_le_bytes());
        raw.extend_from_slice(&10u32.to_le_bytes());
        raw.extend_from_slice(&[0; 4]);
        assert!(matches!(
            parse_pcap(&raw),
            Err(PcapError::Truncated { what: "record body", need: 10, have: 4, .. })
        ));
    }

    #[test]
    fn truncated_record_header() {
        let mut raw = header([0xd4, 0xc3, 0xb2, 0xa1], false, 1);
        raw.extend_from_slice(&[0; 5]);
        assert!(matches!(
            parse_pcap(&raw),
            Err(PcapError::Truncated { what: "record header", .. })
        ));
    }

    #[test]
    fn short_global_header() {
        assert!(matches!(parse_pcap(&[0xd4, 0xc3]), Err(PcapError::Truncated { .. })));
    }
}
