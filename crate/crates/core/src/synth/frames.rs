//! Hand-assembled frames for fixtures and synthetic captures.

use crate::pcap::{FiveTuple, PROTO_TCP, PROTO_UDP};

/// IPv4 header (no options) followed by `l4`, with a valid header checksum.
pub fn ipv4(tuple: &FiveTuple, l4: &[u8]) -> Vec<u8> {
    let total = 20 + l4.len();
    let mut h = vec![0u8; 20];
    h[0] = 0x45;
    h[2..4].copy_from_slice(&(total as u16).to_be_bytes());
    h[6] = 0x40; // don't fragment
    h[8] = 64;
    h[9] = tuple.protocol;
    h[12..16].copy_from_slice(&tuple.src_ip.octets());
    h[16..20].copy_from_slice(&tuple.dst_ip.octets());
    let csum = checksum(&h);
    h[10..12].copy_from_slice(&csum.to_be_bytes());
    h.extend_from_slice(l4);
    h
}

pub fn ipv4_udp(tuple: &FiveTuple, payload: &[u8]) -> Vec<u8> {
    debug_assert_eq!(tuple.protocol, PROTO_UDP);
    let mut udp = Vec::with_capacity(8 + payload.len());
    udp.extend_from_slice(&tuple.src_port.to_be_bytes());
    udp.extend_from_slice(&tuple.dst_port.to_be_bytes());
    udp.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
    udp.extend_from_slice(&[0, 0]);
    udp.extend_from_slice(payload);
    ipv4(tuple, &udp)
}

pub fn ipv4_tcp(tuple: &FiveTuple, payload: &[u8]) -> Vec<u8> {
    debug_assert_eq!(tuple.protocol, PROTO_TCP);
    let mut tcp = vec![0u8; 20];
    tcp[0..2].copy_from_slice(&tuple.src_port.to_be_bytes());
    tcp[2..4].copy_from_slice(&tuple.dst_port.to_be_bytes());
    tcp[12] = 5 << 4;
    tcp[13] = 0x10; // ACK
    tcp[14..16].copy_from_slice(&65_535u16.to_be_bytes());
    tcp.extend_from_slice(payload);
    ipv4(tuple, &tcp)
}

/// Wraps an IPv4 datagram in an Ethernet II header.
pub fn ethernet(ip: &[u8]) -> Vec<u8> {
    let mut f = vec![0x02, 0, 0, 0, 0, 0x02, 0x02, 0, 0, 0, 0, 0x01, 0x08, 0x00];
    f.extend_from_slice(ip);
    f
}

fn checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks(2)
        .map(|c| u16::from_be_bytes([c[0], *c.get(1).unwrap_or(&0)]) as u32)
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}
