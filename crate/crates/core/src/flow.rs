//! Direction-sensitive five-tuple flow tracking over a capture.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::packet::Ipv6Packet;

pub const TCP_HEADER_MIN: usize = 20;
pub const UDP_HEADER_LEN: usize = 8;

/// Direction-sensitive flow identity. Ports are populated only for TCP/UDP
/// packets carrying at least four payload bytes; everything else keys on
/// addresses and next header alone.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub src_addr: [u8; 16],
    pub dst_addr: [u8; 16],
    pub next_header: u8,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
}

impl FlowKey {
    pub fn of(packet: &Ipv6Packet) -> Self {
        let (src_port, dst_port) = match packet.next_header {
            6 | 17 if packet.payload.len() >= 4 => (
                Some(u16::from_be_bytes([packet.payload[0], packet.payload[1]])),
                Some(u16::from_be_bytes([packet.payload[2], packet.payload[3]])),
            ),
            _ => (None, None),
        };
        FlowKey {
            src_addr: packet.src_addr,
            dst_addr: packet.dst_addr,
            next_header: packet.next_header,
            src_port,
            dst_port,
        }
    }
}

/// Per-flow aggregate over one capture.
#[derive(Debug, Clone)]
pub struct FlowRecord {
    pub key: FlowKey,
    /// Capture indices of the flow's packets, strictly increasing.
    pub packet_indices: Vec<usize>,
    /// Highest TCP (sequence + segment length) seen, for continuation.
    pub last_tcp_seq: Option<u32>,
    pub distinct_flow_labels: BTreeSet<u32>,
    /// Modal hop limit; ties break toward the smaller value.
    pub hop_limit_mode: u8,
    hop_limit_counts: BTreeMap<u8, usize>,
    /// Modal flow label; ties break toward the smaller value.
    pub flow_label_mode: u32,
    flow_label_counts: BTreeMap<u32, usize>,
}

impl FlowRecord {
    fn new(key: FlowKey) -> Self {
        FlowRecord {
            key,
            packet_indices: Vec::new(),
            last_tcp_seq: None,
            distinct_flow_labels: BTreeSet::new(),
            hop_limit_mode: 0,
            hop_limit_counts: BTreeMap::new(),
            flow_label_mode: 0,
            flow_label_counts: BTreeMap::new(),
        }
    }

    pub fn distinct_hop_limits(&self) -> usize {
        self.hop_limit_counts.len()
    }

    fn add(&mut self, index: usize, packet: &Ipv6Packet) {
        self.packet_indices.push(index);
        self.distinct_flow_labels.insert(packet.flow_label);
        *self.hop_limit_counts.entry(packet.hop_limit).or_insert(0) += 1;
        // BTreeMap iteration is ascending, so `>` keeps the smallest value
        // among tied counts.
        let (&mode, _) = self
            .hop_limit_counts
            .iter()
            .fold((&0u8, &0usize), |best, cur| if cur.1 > best.1 { cur } else { best });
        self.hop_limit_mode = mode;
        *self.flow_label_counts.entry(packet.flow_label).or_insert(0) += 1;
        let (&label_mode, _) = self
            .flow_label_counts
            .iter()
            .fold((&0u32, &0usize), |best, cur| if cur.1 > best.1 { cur } else { best });
        self.flow_label_mode = label_mode;
        if packet.is_tcp() {
            if let Some(seg) = tcp_segment(packet) {
                let end = seg.seq.wrapping_add(seg.data_len as u32);
                self.last_tcp_seq = Some(match self.last_tcp_seq {
                    Some(prev) if prev >= end => prev,
                    _ => end,
                });
            }
        }
    }
}

/// Minimal view of a TCP segment inside a packet payload.
#[derive(Debug, Clone, Copy)]
pub struct TcpSegment {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub flags: u8,
    /// Payload octets after the TCP header.
    pub data_len: usize,
}

/// Parse the TCP header at the start of the packet payload; `None` when the
/// payload is too short to hold one.
pub fn tcp_segment(packet: &Ipv6Packet) -> Option<TcpSegment> {
    let p = &packet.payload;
    if !packet.is_tcp() || p.len() < TCP_HEADER_MIN {
        return None;
    }
    let header_len = ((p[12] >> 4) as usize) * 4;
    if header_len < TCP_HEADER_MIN {
        return None;
    }
    Some(TcpSegment {
        src_port: u16::from_be_bytes([p[0], p[1]]),
        dst_port: u16::from_be_bytes([p[2], p[3]]),
        seq: u32::from_be_bytes([p[4], p[5], p[6], p[7]]),
        flags: p[13],
        data_len: p.len().saturating_sub(header_len),
    })
}

/// Group a capture into flows. The map is ordered, so iteration (and
/// everything derived from it) is deterministic regardless of insertion
/// pattern.
pub fn build_flow_table(packets: &[Ipv6Packet]) -> BTreeMap<FlowKey, FlowRecord> {
    let mut table: BTreeMap<FlowKey, FlowRecord> = BTreeMap::new();
    for (index, packet) in packets.iter().enumerate() {
        let key = FlowKey::of(packet);
        table
            .entry(key.clone())
            .or_insert_with(|| FlowRecord::new(key))
            .add(index, packet);
    }
    table
}

/// Flow membership as a per-packet lookup: `flow_of[i]` indexes into the
/// values of the table in key order.
pub fn flow_membership(packets: &[Ipv6Packet]) -> (Vec<FlowRecord>, Vec<usize>) {
    let table = build_flow_table(packets);
    let mut key_to_pos: HashMap<FlowKey, usize> = HashMap::with_capacity(table.len());
    let mut records = Vec::with_capacity(table.len());
    for (pos, (key, rec)) in table.into_iter().enumerate() {
        key_to_pos.insert(key, pos);
        records.push(rec);
    }
    let membership = packets
        .iter()
        .map(|p| key_to_pos[&FlowKey::of(p)])
        .collect();
    (records, membership)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{LINKTYPE_RAW, IPV6_HEADER_LEN};

    fn packet(src: u8, dst: u8, next_header: u8, payload: Vec<u8>) -> Ipv6Packet {
        Ipv6Packet {
            traffic_class: 0,
            flow_label: 0,
            payload_length_declared: payload.len() as u16,
            next_header,
            hop_limit: 60,
            src_addr: [src; 16],
            dst_addr: [dst; 16],
            payload,
            ts_sec: 0,
            ts_usec: 0,
            link_type: LINKTYPE_RAW,
            link_prefix: Vec::new(),
            orig_len: (IPV6_HEADER_LEN + 20) as u32,
        }
    }

    fn tcp_payload(src_port: u16, dst_port: u16, seq: u32, data: &[u8]) -> Vec<u8> {
        let mut p = vec![0u8; TCP_HEADER_MIN];
        p[0..2].copy_from_slice(&src_port.to_be_bytes());
        p[2..4].copy_from_slice(&dst_port.to_be_bytes());
        p[4..8].copy_from_slice(&seq.to_be_bytes());
        p[12] = 5 << 4;
        p[13] = 0x18; // PSH|ACK
        p.extend_from_slice(data);
        p
    }

    #[test]
    fn directions_are_distinct_flows() {
        let a = packet(1, 2, 17, vec![0, 53, 0, 99, 0, 0, 0, 0]);
        let b = packet(2, 1, 17, vec![0, 99, 0, 53, 0, 0, 0, 0]);
        let table = build_flow_table(&[a, b]);
        assert_eq!(table.len(), 2);
    }

    #[test]
    fn ports_only_for_tcp_udp_with_payload() {
        let icmp = packet(1, 2, 58, vec![128, 0, 0, 0]);
        let key = FlowKey::of(&icmp);
        assert_eq!(key.src_port, None);

        let short_udp = packet(1, 2, 17, vec![0, 53]);
        assert_eq!(FlowKey::of(&short_udp).src_port, None);

        let udp = packet(1, 2, 17, vec![0x13, 0x88, 0x00, 0x35, 0, 0, 0, 0]);
        let key = FlowKey::of(&udp);
        assert_eq!(key.src_port, Some(5000));
        assert_eq!(key.dst_port, Some(53));
    }

    #[test]
    fn tcp_seq_tracking_uses_highest_end() {
        let p1 = packet(1, 2, 6, tcp_payload(4000, 80, 1000, &[0; 100]));
        let p2 = packet(1, 2, 6, tcp_payload(4000, 80, 1100, &[0; 100]));
        let table = build_flow_table(&[p1.clone(), p2]);
        let rec = table.values().next().unwrap();
        assert_eq!(rec.last_tcp_seq, Some(1200));
        assert_eq!(rec.packet_indices, vec![0, 1]);

        // Out-of-order arrival keeps the highest end.
        let p3 = packet(1, 2, 6, tcp_payload(4000, 80, 500, &[0; 10]));
        let table = build_flow_table(&[p1, p3]);
        assert_eq!(table.values().next().unwrap().last_tcp_seq, Some(1100));
    }

    #[test]
    fn distinct_labels_and_hop_mode() {
        let mut a = packet(1, 2, 17, vec![0, 53, 0, 99, 0, 0, 0, 0]);
        let mut b = a.clone();
        let mut c = a.clone();
        a.flow_label = 0x12345;
        b.flow_label = 0x12345;
        c.flow_label = 0x54321;
        b.hop_limit = 61;
        c.hop_limit = 61;
        let table = build_flow_table(&[a, b, c]);
        let rec = table.values().next().unwrap();
        assert_eq!(rec.distinct_flow_labels.len(), 2);
        assert_eq!(rec.hop_limit_mode, 61);
        assert_eq!(rec.distinct_hop_limits(), 2);
        assert_eq!(rec.flow_label_mode, 0x12345);
    }

    #[test]
    fn hop_mode_tie_prefers_smaller() {
        let mut a = packet(1, 2, 58, vec![128, 0, 0, 0]);
        let mut b = a.clone();
        a.hop_limit = 64;
        b.hop_limit = 48;
        a.flow_label = 0x70000;
        b.flow_label = 0x00007;
        let table = build_flow_table(&[a, b]);
        let rec = table.values().next().unwrap();
        assert_eq!(rec.hop_limit_mode, 48);
        assert_eq!(rec.flow_label_mode, 0x00007);
    }

    #[test]
    fn membership_aligns_with_table_order() {
        let a = packet(1, 2, 58, vec![128, 0, 0, 0]);
        let b = packet(3, 4, 58, vec![128, 0, 0, 0]);
        let (records, membership) = flow_membership(&[a.clone(), b, a]);
        assert_eq!(records.len(), 2);
        assert_eq!(membership[0], membership[2]);
        assert_ne!(membership[0], membership[1]);
        for (pos, rec) in records.iter().enumerate() {
            for &i in &rec.packet_indices {
                assert_eq!(membership[i], pos);
            }
        }
    }
}
