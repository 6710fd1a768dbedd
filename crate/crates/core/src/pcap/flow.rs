use std::collections::{BTreeMap, HashMap};

use super::{decode_packet, parse_pcap, Decoded, FiveTuple, ParsedPacket, PcapError, SkipReason, Timestamp};

/// Packets sharing one canonical 5-tuple, in time order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flow {
    pub key: FiveTuple,
    pub packets: Vec<ParsedPacket>,
}

impl Flow {
    pub fn first_time(&self) -> Timestamp {
        self.packets[0].time
    }

    pub fn byte_count(&self) -> usize {
        self.packets.iter().map(|p| p.bytes.len()).sum()
    }
}

/// Returns the direction-independent key when `bidirectional` is set: the
/// smaller of the tuple and its reverse, compared on the 13-byte encoding.
pub fn canonicalize(t: FiveTuple, bidirectional: bool) -> FiveTuple {
    if !bidirectional {
        return t;
    }
    let r = t.reversed();
    if r.encode() < t.encode() {
        r
    } else {
        t
    }
}

/// Groups packets into flows.
///
/// Within a flow packets are sorted by time, ties keeping input order. Flows
/// are ordered by first-packet time, ties by the input position of that
/// first packet.
pub fn split_flows(packets: Vec<ParsedPacket>, bidirectional: bool) -> Vec<Flow> {
    let mut index: HashMap<FiveTuple, usize> = HashMap::new();
    let mut groups: Vec<(FiveTuple, Vec<(usize, ParsedPacket)>)> = Vec::new();
    for (pos, p) in packets.into_iter().enumerate() {
        let key = canonicalize(p.tuple, bidirectional);
        let slot = *index.entry(key).or_insert_with(|| {
            groups.push((key, Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push((pos, p));
    }
    let mut flows: Vec<(Timestamp, usize, Flow)> = groups
        .into_iter()
        .map(|(key, mut members)| {
            members.sort_by_key(|(pos, p)| (p.time, *pos));
            let (first_pos, first_time) = (members[0].0, members[0].1.time);
            let packets = members.into_iter().map(|(_, p)| p).collect();
            (first_time, first_pos, Flow { key, packets })
        })
        .collect();
    flows.sort_by_key(|(t, pos, _)| (*t, *pos));
    flows.into_iter().map(|(_, _, f)| f).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaptureStats {
    pub records: usize,
    pub kept: usize,
    pub skipped: BTreeMap<SkipReason, usize>,
}

impl CaptureStats {
    pub fn skipped_total(&self) -> usize {
        self.skipped.values().sum()
    }
}

/// All flows extracted from one capture file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureSet {
    pub source_name: String,
    pub flows: Vec<Flow>,
}

impl CaptureSet {
    /// Parses, decodes and splits an in-memory pcap file.
    pub fn from_pcap(
        source_name: impl Into<String>,
        raw: &[u8],
        bidirectional: bool,
    ) -> Result<(Self, CaptureStats), PcapError> {
        let records = parse_pcap(raw)?;
        let mut stats = CaptureStats {
            records: records.len(),
            ..Default::default()
        };
        let mut packets = Vec::with_capacity(records.len());
        for r in records {
            match decode_packet(&r.data, r.link_type, r.time, r.orig_len) {
                Decoded::Packet(p) => packets.push(p),
                Decoded::Skip(reason) => *stats.skipped.entry(reason).or_default() += 1,
            }
        }
        stats.kept = packets.len();
        let flows = split_flows(packets, bidirectional);
        Ok((
            Self {
                source_name: source_name.into(),
                flows,
            },
            stats,
        ))
    }

    pub fn packet_count(&self) -> usize {
        self.flows.iter().map(|f| f.packets.len()).sum()
    }
}
