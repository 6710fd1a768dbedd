use std::net::Ipv4Addr;

use super::{FiveTuple, ParsedPacket, Timestamp, LINKTYPE_ETHERNET, LINKTYPE_RAW, PROTO_TCP, PROTO_UDP};

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SkipReason {
    UnsupportedLinkType,
    NotIpv4,
    NotTcpUdp,
    Truncated,
    /// Non-initial IPv4 fragment: no transport header to key on.
    Fragment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Packet(ParsedPacket),
    Skip(SkipReason),
}

impl Decoded {
    pub fn packet(self) -> Option<ParsedPacket> {
        match self {
            Decoded::Packet(p) => Some(p),
            Decoded::Skip(_) => None,
        }
    }
}

/// Strips the link layer and extracts the 5-tuple of an IPv4 TCP/UDP frame.
pub fn decode_packet(frame: &[u8], link_type: u32, time: Timestamp, orig_len: u32) -> Decoded {
    let ip = match link_type {
        LINKTYPE_ETHERNET => match strip_ethernet(frame) {
            Ok(ip) => ip,
            Err(r) => return Decoded::Skip(r),
        },
        LINKTYPE_RAW => frame,
        _ => return Decoded::Skip(SkipReason::UnsupportedLinkType),
    };
    match decode_ipv4(ip) {
        Ok((tuple, len)) => Decoded::Packet(ParsedPacket {
            tuple,
            bytes: ip[..len].to_vec(),
            orig_len,
            time,
        }),
        Err(r) => Decoded::Skip(r),
    }
}

fn strip_ethernet(frame: &[u8]) -> Result<&[u8], SkipReason> {
    if frame.len() < 14 {
        return Err(SkipReason::Truncated);
    }
    let mut ethertype = u16::from_be_bytes([frame[12], frame[13]]);
    let mut off = 14;
    while ethertype == ETHERTYPE_VLAN {
        if frame.len() < off + 4 {
            return Err(SkipReason::Truncated);
        }
        ethertype = u16::from_be_bytes([frame[off + 2], frame[off + 3]]);
        off += 4;
    }
    if ethertype != ETHERTYPE_IPV4 {
        return Err(SkipReason::NotIpv4);
    }
    Ok(&frame[off..])
}

/// Returns the tuple and the number of captured bytes belonging to the IP
/// datagram (link-layer trailer padding removed).
fn decode_ipv4(ip: &[u8]) -> Result<(FiveTuple, usize), SkipReason> {
    if ip.is_empty() {
        return Err(SkipReason::Truncated);
    }
    if ip[0] >> 4 != 4 {
        return Err(SkipReason::NotIpv4);
    }
    let ihl = ((ip[0] & 0x0f) as usize) * 4;
    if ihl < 20 || ip.len() < ihl {
        return Err(SkipReason::Truncated);
    }
    let protocol = ip[9];
    if protocol != PROTO_TCP && protocol != PROTO_UDP {
        return Err(SkipReason::NotTcpUdp);
    }
    let frag_offset = u16::from_be_bytes([ip[6], ip[7]]) & 0x1fff;
    if frag_offset != 0 {
        return Err(SkipReason::Fragment);
    }
    let total_len = u16::from_be_bytes([ip[2], ip[3]]) as usize;
    let len = if total_len >= ihl && total_len <= ip.len() {
        total_len
    } else {
        ip.len()
    };
    let transport = &ip[ihl..len];
    let min_header = if protocol == PROTO_TCP { 20 } else { 8 };
    if transport.len() < min_header {
        return Err(SkipReason::Truncated);
    }
    let src = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let sport = u16::from_be_bytes([transport[0], transport[1]]);
    let dport = u16::from_be_bytes([transport[2], transport[3]]);
    Ok((FiveTuple::new((src, sport), (dst, dport), protocol), len))
}
