//! Deterministic synthetic data: hand-assembled capture fixtures,
//! intensity-separable capture corpora, opcode-disjoint call-graph corpora,
//! Gaussian blobs and token corpora. Every generator is a pure function of
//! its seed.

pub mod frames;
mod graphs;

pub use graphs::{graph_corpus, SyntheticGraph};

use std::net::Ipv4Addr;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::image::ClassLabel;
use crate::pcap::{write_pcap, FiveTuple, ParsedPacket, PcapRecord, Timestamp, LINKTYPE_ETHERNET, PROTO_TCP, PROTO_UDP};

fn record(time: Timestamp, frame: Vec<u8>) -> PcapRecord {
    PcapRecord {
        time,
        link_type: LINKTYPE_ETHERNET,
        orig_len: frame.len() as u32,
        data: frame,
    }
}

fn ip(s: &str) -> Ipv4Addr {
    s.parse().expect("literal address")
}

/// Three Ethernet/IPv4/UDP frames 10.0.0.1:1111 → 10.0.0.2:2222 at t = 100.000001,
/// 100.5 and 101.25 with payloads "a", "bb", "ccc".
pub fn three_udp_frames() -> Vec<PcapRecord> {
    let t = FiveTuple::new((ip("10.0.0.1"), 1111), (ip("10.0.0.2"), 2222), PROTO_UDP);
    vec![
        record(Timestamp::new(100, 1), frames::ethernet(&frames::ipv4_udp(&t, b"a"))),
        record(Timestamp::new(100, 500_000), frames::ethernet(&frames::ipv4_udp(&t, b"bb"))),
        record(Timestamp::new(101, 250_000), frames::ethernet(&frames::ipv4_udp(&t, b"ccc"))),
    ]
}

/// A capture with three flows (one TCP session seen in both directions,
/// two UDP flows) plus one ARP frame that decodes to Skip.
pub fn three_flow_pcap() -> Vec<u8> {
    let tcp = FiveTuple::new((ip("10.0.0.1"), 4000), (ip("10.0.0.2"), 80), PROTO_TCP);
    let dns = FiveTuple::new((ip("10.0.0.1"), 5353), (ip("8.8.8.8"), 53), PROTO_UDP);
    let other = FiveTuple::new((ip("10.0.0.3"), 6000), (ip("10.0.0.9"), 7000), PROTO_UDP);
    let mut arp = vec![0xff; 6];
    arp.extend_from_slice(&[0x02, 0, 0, 0, 0, 1, 0x08, 0x06]);
    arp.extend_from_slice(&[0u8; 28]);
    let recs = vec![
        record(Timestamp::new(10, 0), frames::ethernet(&frames::ipv4_tcp(&tcp, b"GET / HTTP/1.1\r\n\r\n"))),
        record(Timestamp::new(10, 10), frames::ethernet(&frames::ipv4_udp(&dns, &[0xab; 30]))),
        record(Timestamp::new(10, 20), arp),
        record(Timestamp::new(10, 30), frames::ethernet(&frames::ipv4_tcp(&tcp.reversed(), &[0x41; 120]))),
        record(Timestamp::new(11, 0), frames::ethernet(&frames::ipv4_udp(&other, &[0x7f; 64]))),
        record(Timestamp::new(11, 5), frames::ethernet(&frames::ipv4_udp(&dns.reversed(), &[0xcd; 90]))),
    ];
    write_pcap(&recs, LINKTYPE_ETHERNET)
}

/// `n` packets over `tuples` random tuples with coarse random timestamps
/// (so ties occur). Directions are randomly flipped.
pub fn random_packets(n: usize, tuples: usize, seed: u64) -> Vec<ParsedPacket> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys: Vec<FiveTuple> = (0..tuples.max(1))
        .map(|_| {
            FiveTuple::new(
                (Ipv4Addr::from(rng.gen_range(0x0a00_0001u32..0x0a00_0010)), rng.gen_range(1..6)),
                (Ipv4Addr::from(rng.gen_range(0x0a00_0001u32..0x0a00_0010)), rng.gen_range(1..6)),
                if rng.gen_bool(0.5) { PROTO_TCP } else { PROTO_UDP },
            )
        })
        .collect();
    (0..n)
        .map(|i| {
            let k = keys[rng.gen_range(0..keys.len())];
            let tuple = if rng.gen_bool(0.5) { k } else { k.reversed() };
            ParsedPacket {
                tuple,
                bytes: (i as u32).to_be_bytes().to_vec(),
                orig_len: 4,
                time: Timestamp::new(rng.gen_range(0..20), rng.gen_range(0..3)),
            }
        })
        .collect()
}

/// One generated capture file with its class.
#[derive(Debug, Clone)]
pub struct SyntheticCapture {
    pub name: String,
    pub label: ClassLabel,
    pub pcap: Vec<u8>,
}

/// Mean payload byte for class `k` of `classes`, spread over 0x20..=0xe0.
pub fn class_intensity(k: usize, classes: usize) -> f64 {
    if classes <= 1 {
        return 128.0;
    }
    32.0 + k as f64 * (192.0 / (classes - 1) as f64)
}

/// Captures whose flow payload bytes cluster around a per-class gray
/// level, so flow images are separable by mean intensity. Labels cycle
/// through `classes` in order.
pub fn capture_corpus(n: usize, classes: &[ClassLabel], seed: u64) -> Vec<SyntheticCapture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 12.0).expect("valid sigma");
    (0..n)
        .map(|c| {
            let k = c % classes.len();
            let level = class_intensity(k, classes.len());
            let client = Ipv4Addr::from(0x0a00_0000u32 + rng.gen_range(2..250));
            let mut recs = Vec::new();
            let n_flows = rng.gen_range(2..=6);
            let mut secs = 1_600_000_000 + c as u32 * 1000;
            for _ in 0..n_flows {
                let proto = if rng.gen_bool(0.5) { PROTO_TCP } else { PROTO_UDP };
                let server = Ipv4Addr::from(rng.gen::<u32>() | 0x0100_0000);
                let tuple = FiveTuple::new((client, rng.gen_range(1024..65535)), (server, rng.gen_range(1..1024)), proto);
                for p in 0..rng.gen_range(1..=3) {
                    let dir = if p % 2 == 0 { tuple } else { tuple.reversed() };
                    let len = rng.gen_range(150..500);
                    let payload: Vec<u8> = (0..len)
                        .map(|_| (level + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8)
                        .collect();
                    let ip = if proto == PROTO_TCP {
                        frames::ipv4_tcp(&dir, &payload)
                    } else {
                        frames::ipv4_udp(&dir, &payload)
                    };
                    secs += rng.gen_range(0..3);
                    recs.push(record(Timestamp::new(secs, rng.gen_range(0..1_000_000)), frames::ethernet(&ip)));
                }
            }
            recs.sort_by_key(|r| r.time);
            SyntheticCapture {
                name: format!("capture_{c:04}.pcap"),
                label: classes[k],
                pcap: write_pcap(&recs, LINKTYPE_ETHERNET),
            }
        })
        .collect()
}

/// `k` isotropic Gaussian blobs in `dim` dimensions, unit σ, with centers
/// `separation` apart along distinct axes. Labels cycle 0..k.
pub fn gaussian_blobs(n: usize, k: usize, dim: usize, separation: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    assert!(dim >= k, "need at least one axis per class");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid sigma");
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let mut x: Vec<f64> = (0..dim).map(|_| unit.sample(&mut rng)).collect();
        // centers at (sep/√2)·e_c are pairwise `separation` apart
        x[c] += separation / std::f64::consts::SQRT_2;
        xs.push(x);
        ys.push(c);
    }
    (xs, ys)
}

/// Sentences alternating the two tokens of one pair, e.g. `x3 y3 x3 y3 …`,
/// so each pair shares its context and no two pairs ever co-occur.
pub fn cooccurrence_corpus(pairs: usize, sentences: usize, len: usize, seed: u64) -> (Vec<Vec<String>>, Vec<(String, String)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<(String, String)> = (0..pairs).map(|i| (format!("x{i}"), format!("y{i}"))).collect();
    let corpus = (0..sentences)
        .map(|_| {
            let (a, b) = &names[rng.gen_range(0..pairs)];
            let start = rng.gen_bool(0.5);
            (0..len).map(|j| if (j % 2 == 0) == start { a.clone() } else { b.clone() }).collect()
        })
        .collect();
    (corpus, names)
}

/// Tokens `t0..t{vocab}` drawn with probability ∝ 1/rank^exponent.
pub fn zipf_corpus(vocab: usize, tokens: usize, exponent: f64, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (1..=vocab).map(|r| (r as f64).powf(-exponent)).collect();
    let dist = WeightedIndex::new(&weights).expect("positive weights");
    let words: Vec<Vec<String>> = (0..tokens)
        .map(|_| format!("t{}", dist.sample(&mut rng)))
        .collect::<Vec<_>>()
        .chunks(50)
        .map(|c| c.to_vec())
        .collect();
    words
}
