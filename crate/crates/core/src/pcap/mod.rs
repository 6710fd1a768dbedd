//! Classic libpcap capture parsing and 5-tuple flow grouping.
//!
//! The reader handles the original libpcap container (24-byte global header,
//! 16-byte record headers) in both byte orders and both timestamp
//! resolutions. PCAPNG is not supported.

mod decode;
mod file;
mod flow;

pub use decode::{decode_packet, Decoded, SkipReason};
pub use file::{parse_pcap, write_pcap, PcapError, PcapRecord, LINKTYPE_ETHERNET, LINKTYPE_RAW};
pub use flow::{canonicalize, split_flows, CaptureSet, CaptureStats, Flow};

use std::fmt;
use std::net::Ipv4Addr;

pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;

/// Capture timestamp, microsecond resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp {
    pub secs: u32,
    pub micros: u32,
}

impl Timestamp {
    pub fn new(secs: u32, micros: u32) -> Self {
        Self { secs, micros }
    }

    pub fn as_micros(&self) -> u64 {
        self.secs as u64 * 1_000_000 + self.micros as u64
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.secs, self.micros)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FiveTuple {
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
    pub protocol: u8,
}

impl FiveTuple {
    pub fn new(src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16), protocol: u8) -> Self {
        Self {
            src_ip: src.0,
            src_port: src.1,
            dst_ip: dst.0,
            dst_port: dst.1,
            protocol,
        }
    }

    pub fn reversed(&self) -> Self {
        Self {
            src_ip: self.dst_ip,
            src_port: self.dst_port,
            dst_ip: self.src_ip,
            dst_port: self.src_port,
            protocol: self.protocol,
        }
    }

    /// 13-byte big-endian encoding: src ip | src port | dst ip | dst port | protocol.
    pub fn encode(&self) -> [u8; 13] {
        let mut out = [0u8; 13];
        out[0..4].copy_from_slice(&self.src_ip.octets());
        out[4..6].copy_from_slice(&self.src_port.to_be_bytes());
        out[6..10].copy_from_slice(&self.dst_ip.octets());
        out[10..12].copy_from_slice(&self.dst_port.to_be_bytes());
        out[12] = self.protocol;
        out
    }
}

impl fmt::Display for FiveTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let proto = match self.protocol {
            PROTO_TCP => "TCP",
            PROTO_UDP => "UDP",
            _ => "?",
        };
        write!(
            f,
            "{}:{} -> {}:{} {}",
            self.src_ip, self.src_port, self.dst_ip, self.dst_port, proto
        )
    }
}

/// One retained IPv4 TCP/UDP packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPacket {
    pub tuple: FiveTuple,
    /// Captured bytes starting at the IPv4 header.
    pub bytes: Vec<u8>,
    /// Original on-the-wire length of the frame, as recorded by the capture.
    pub orig_len: u32,
    pub time: Timestamp,
}

impl ParsedPacket {
    /// Captured size in bytes (always `bytes.len()`).
    pub fn size(&self) -> usize {
        self.bytes.len()
    }
}
