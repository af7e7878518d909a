//! Deterministic synthetic IPv6 background traffic.
//!
//! The generator interleaves TCP conversations (handshake plus data with
//! contiguous sequence numbers), UDP request/response flows, ICMPv6 echo
//! pairs, and singleton ICMPv6 error messages. Field statistics follow what
//! passive captures show: hop limits cluster in [48,60], [109,114], and
//! [233,255]; TCP flow labels are flow-constant and mostly zero while UDP
//! labels are uniform 20-bit draws; DSCP is almost always zero; declared
//! payload lengths match the bytes on the wire.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::channels::ChannelKind;
use crate::flow::{TCP_HEADER_MIN, UDP_HEADER_LEN};
use crate::packet::{ethernet_prefix, Ipv6Packet, LINKTYPE_ETHERNET};
use crate::rng::stream_rng;

use super::{LabeledCapture, MixConfig, Provenance};

/// Capture epoch; timestamps count microseconds from here.
const BASE_TS: u64 = 1_712_000_000;

const STREAM_HOSTS: u64 = 0;
const STREAM_FLOWS: u64 = 1;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Host {
    pub addr: [u8; 16],
}

pub(crate) struct HostPool {
    pub clients: Vec<Host>,
    pub servers: Vec<Host>,
    pub routers: Vec<Host>,
}

/// Hop limits concentrate where passive captures see them: 64-ish minus a
/// few hops, 128-ish minus a few hops, and a small 255-ish tail.
pub(crate) fn sample_hop_limit(rng: &mut ChaCha12Rng) -> u8 {
    let r = rng.random::<f64>();
    if r < 0.6 {
        rng.random_range(48..=60)
    } else if r < 0.9 {
        rng.random_range(109..=114)
    } else {
        rng.random_range(233..=255)
    }
}

fn sample_dscp(rng: &mut ChaCha12Rng) -> u8 {
    if rng.random::<f64>() < 0.92 {
        0
    } else {
        *pick(rng, &[8, 10, 18, 34, 46])
    }
}

fn sample_ecn(rng: &mut ChaCha12Rng) -> u8 {
    if rng.random::<f64>() < 0.96 {
        0
    } else {
        *pick(rng, &[1, 2])
    }
}

fn pick<'a, T>(rng: &mut ChaCha12Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

fn random_bytes(rng: &mut ChaCha12Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.random::<u8>()).collect()
}

fn doc_prefix(rng: &mut ChaCha12Rng) -> [u8; 8] {
    [
        0x20,
        0x01,
        0x0d,
        0xb8,
        rng.random::<u8>(),
        rng.random::<u8>(),
        rng.random::<u8>(),
        rng.random::<u8>(),
    ]
}

/// Interface identifiers mirror the styles seen in the wild: compact manual
/// suffixes, EUI-64 with the ff:fe infix, and fully random privacy
/// addresses.
fn client_iid(rng: &mut ChaCha12Rng) -> [u8; 8] {
    let r = rng.random::<f64>();
    if r < 0.30 {
        low_iid(rng)
    } else if r < 0.85 {
        let mut iid = [0u8; 8];
        for (i, b) in iid.iter_mut().enumerate() {
            *b = rng.random::<u8>();
            if i == 3 {
                *b = 0xFF;
            }
            if i == 4 {
                *b = 0xFE;
            }
        }
        iid
    } else {
        let mut iid = [0u8; 8];
        rng.fill(&mut iid);
        iid
    }
}

fn low_iid(rng: &mut ChaCha12Rng) -> [u8; 8] {
    let mut iid = [0u8; 8];
    iid[7] = rng.random_range(1..=255);
    if rng.random::<f64>() < 0.3 {
        iid[6] = rng.random_range(1..=255);
    }
    iid
}

fn host(rng: &mut ChaCha12Rng, prefixes: &[[u8; 8]], iid: [u8; 8]) -> Host {
    let mut addr = [0u8; 16];
    addr[..8].copy_from_slice(pick(rng, prefixes));
    addr[8..].copy_from_slice(&iid);
    Host { addr }
}

pub(crate) fn build_host_pool(seed: u64) -> HostPool {
    let mut rng = stream_rng(seed, STREAM_HOSTS);
    let prefixes: Vec<[u8; 8]> = (0..10).map(|_| doc_prefix(&mut rng)).collect();
    let clients = (0..48)
        .map(|_| {
            let iid = client_iid(&mut rng);
            host(&mut rng, &prefixes, iid)
        })
        .collect();
    let servers = (0..16)
        .map(|_| {
            let iid = low_iid(&mut rng);
            host(&mut rng, &prefixes, iid)
        })
        .collect();
    let routers = (0..8)
        .map(|_| {
            let iid = low_iid(&mut rng);
            host(&mut rng, &prefixes, iid)
        })
        .collect();
    HostPool {
        clients,
        servers,
        routers,
    }
}

/// Assemble one Ethernet-framed IPv6 packet; the declared length always
/// matches the payload actually attached.
#[allow(clippy::too_many_arguments)]
pub(crate) fn make_packet(
    src: [u8; 16],
    dst: [u8; 16],
    next_header: u8,
    hop_limit: u8,
    flow_label: u32,
    traffic_class: u8,
    payload: Vec<u8>,
    micros: u64,
) -> Ipv6Packet {
    let mut p = Ipv6Packet {
        traffic_class,
        flow_label,
        payload_length_declared: payload.len() as u16,
        next_header,
        hop_limit,
        src_addr: src,
        dst_addr: dst,
        payload,
        ts_sec: (BASE_TS + micros / 1_000_000) as u32,
        ts_usec: (micros % 1_000_000) as u32,
        link_type: LINKTYPE_ETHERNET,
        link_prefix: ethernet_prefix(&src, &dst),
        orig_len: 0,
    };
    p.orig_len = p.wire_len() as u32;
    p
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn tcp_payload(
    rng: &mut ChaCha12Rng,
    src_port: u16,
    dst_port: u16,
    seq: u32,
    ack: u32,
    flags: u8,
    window: u16,
    data_len: usize,
) -> Vec<u8> {
    let mut p = Vec::with_capacity(TCP_HEADER_MIN + data_len);
    p.extend_from_slice(&src_port.to_be_bytes());
    p.extend_from_slice(&dst_port.to_be_bytes());
    p.extend_from_slice(&seq.to_be_bytes());
    p.extend_from_slice(&ack.to_be_bytes());
    p.push(5 << 4);
    p.push(flags);
    p.extend_from_slice(&window.to_be_bytes());
    p.extend_from_slice(&rng.random::<u16>().to_be_bytes()); // checksum, unchecked
    p.extend_from_slice(&0u16.to_be_bytes());
    p.extend(random_bytes(rng, data_len));
    p
}

pub(crate) fn udp_payload(
    rng: &mut ChaCha12Rng,
    src_port: u16,
    dst_port: u16,
    data_len: usize,
) -> Vec<u8> {
    let mut p = Vec::with_capacity(UDP_HEADER_LEN + data_len);
    p.extend_from_slice(&src_port.to_be_bytes());
    p.extend_from_slice(&dst_port.to_be_bytes());
    p.extend_from_slice(&((UDP_HEADER_LEN + data_len) as u16).to_be_bytes());
    p.extend_from_slice(&rng.random::<u16>().to_be_bytes());
    p.extend(random_bytes(rng, data_len));
    p
}

/// Per-direction header constants of one conversation.
struct Direction {
    src: [u8; 16],
    dst: [u8; 16],
    hop_limit: u8,
    flow_label: u32,
    traffic_class: u8,
}

impl Direction {
    fn new(rng: &mut ChaCha12Rng, src: Host, dst: Host, flow_label: u32) -> Self {
        Direction {
            src: src.addr,
            dst: dst.addr,
            hop_limit: sample_hop_limit(rng),
            flow_label,
            traffic_class: (sample_dscp(rng) << 2) | sample_ecn(rng),
        }
    }

    fn packet(&self, next_header: u8, payload: Vec<u8>, micros: u64) -> Ipv6Packet {
        make_packet(
            self.src,
            self.dst,
            next_header,
            self.hop_limit,
            self.flow_label,
            self.traffic_class,
            payload,
            micros,
        )
    }
}

fn tcp_label(rng: &mut ChaCha12Rng) -> u32 {
    if rng.random::<f64>() < 0.7 {
        0
    } else {
        rng.random::<u32>() & 0xF_FFFF
    }
}

fn echo_label(rng: &mut ChaCha12Rng) -> u32 {
    if rng.random::<f64>() < 0.6 {
        0
    } else {
        rng.random::<u32>() & 0xF_FFFF
    }
}

/// One TCP conversation: handshake, then data segments whose sequence
/// numbers are contiguous per direction.
fn tcp_flow(
    rng: &mut ChaCha12Rng,
    hosts: &HostPool,
    bulk: bool,
    clock: &mut u64,
    out: &mut Vec<(u64, Ipv6Packet)>,
) {
    let client = *pick(rng, &hosts.clients);
    let server = *pick(rng, &hosts.servers);
    let fwd_label = tcp_label(rng);
    let rev_label = tcp_label(rng);
    let fwd = Direction::new(rng, client, server, fwd_label);
    let rev = Direction::new(rng, server, client, rev_label);
    let client_port: u16 = rng.random_range(32768..=60999);
    let server_port: u16 = *pick(rng, &[80, 443, 22, 25, 8080]);
    let window: u16 = rng.random_range(16384..=65535);

    let total = if bulk {
        rng.random_range(40..=160)
    } else {
        rng.random_range(4..=16)
    };
    let mut seq_fwd: u32 = rng.random();
    let mut seq_rev: u32 = rng.random();
    let mut t = *clock;
    let step = |t: &mut u64, rng: &mut ChaCha12Rng| {
        *t += rng.random_range(200..=20_000);
        *t
    };

    // Handshake. Sequence numbers start where the data continues, so each
    // direction's segments stay contiguous from the first packet on.
    out.push((
        t,
        fwd.packet(
            6,
            tcp_payload(rng, client_port, server_port, seq_fwd, 0, 0x02, window, 0),
            t,
        ),
    ));
    let t2 = step(&mut t, rng);
    out.push((
        t2,
        rev.packet(
            6,
            tcp_payload(rng, server_port, client_port, seq_rev, seq_fwd, 0x12, window, 0),
            t2,
        ),
    ));
    let t3 = step(&mut t, rng);
    out.push((
        t3,
        fwd.packet(
            6,
            tcp_payload(rng, client_port, server_port, seq_fwd, seq_rev, 0x10, window, 0),
            t3,
        ),
    ));

    for _ in 3..total {
        let tn = step(&mut t, rng);
        let from_client = rng.random::<f64>() < 0.35;
        let pure_ack = rng.random::<f64>() < 0.15;
        let data_len = if pure_ack {
            0
        } else if from_client {
            rng.random_range(20..=300)
        } else if bulk {
            rng.random_range(400..=1400)
        } else {
            rng.random_range(100..=900)
        };
        let packet = if from_client {
            let p = fwd.packet(
                6,
                tcp_payload(rng, client_port, server_port, seq_fwd, seq_rev, 0x18, window, data_len),
                tn,
            );
            seq_fwd = seq_fwd.wrapping_add(data_len as u32);
            p
        } else {
            let p = rev.packet(
                6,
                tcp_payload(rng, server_port, client_port, seq_rev, seq_fwd, 0x18, window, data_len),
                tn,
            );
            seq_rev = seq_rev.wrapping_add(data_len as u32);
            p
        };
        out.push((tn, packet));
    }
}

/// UDP request/response exchange; each direction keeps one uniform 20-bit
/// flow label for the life of the flow.
fn udp_flow(
    rng: &mut ChaCha12Rng,
    hosts: &HostPool,
    clock: &mut u64,
    out: &mut Vec<(u64, Ipv6Packet)>,
) {
    let client = *pick(rng, &hosts.clients);
    let server = *pick(rng, &hosts.servers);
    let fwd_label = rng.random::<u32>() & 0xF_FFFF;
    let rev_label = rng.random::<u32>() & 0xF_FFFF;
    let fwd = Direction::new(rng, client, server, fwd_label);
    let rev = Direction::new(rng, server, client, rev_label);
    let client_port: u16 = rng.random_range(32768..=60999);
    let server_port: u16 = *pick(rng, &[53, 123, 443, 5353, 4500]);
    let total = rng.random_range(2..=14);
    let mut t = *clock;
    for i in 0..total {
        t += rng.random_range(200..=20_000);
        let data_len = rng.random_range(12..=400);
        let packet = if i % 2 == 0 {
            fwd.packet(17, udp_payload(rng, client_port, server_port, data_len), t)
        } else {
            rev.packet(17, udp_payload(rng, server_port, client_port, data_len), t)
        };
        out.push((t, packet));
    }
}

fn icmp_checksum_stub(rng: &mut ChaCha12Rng) -> [u8; 2] {
    rng.random::<u16>().to_be_bytes()
}

/// ICMPv6 echo request/reply pairs sharing an identifier, with the payload
/// echoed back verbatim.
fn echo_flow(
    rng: &mut ChaCha12Rng,
    hosts: &HostPool,
    clock: &mut u64,
    out: &mut Vec<(u64, Ipv6Packet)>,
) {
    let client = *pick(rng, &hosts.clients);
    let server = *pick(rng, &hosts.servers);
    let fwd_label = echo_label(rng);
    let rev_label = echo_label(rng);
    let fwd = Direction::new(rng, client, server, fwd_label);
    let rev = Direction::new(rng, server, client, rev_label);
    let ident: u16 = rng.random();
    let pairs = rng.random_range(1..=6);
    let mut t = *clock;
    for seq in 0..pairs {
        let data_len = rng.random_range(16..=56);
        let data = random_bytes(rng, data_len);
        for (dir, kind) in [(&fwd, 128u8), (&rev, 129u8)] {
            t += rng.random_range(200..=20_000);
            let mut payload = vec![kind, 0];
            payload.extend_from_slice(&icmp_checksum_stub(rng));
            payload.extend_from_slice(&ident.to_be_bytes());
            payload.extend_from_slice(&(seq as u16).to_be_bytes());
            payload.extend_from_slice(&data);
            out.push((t, dir.packet(58, payload, t)));
        }
    }
}

/// A singleton ICMPv6 error message from a router, embedding a fragment of
/// the offending packet.
fn error_packet(
    rng: &mut ChaCha12Rng,
    hosts: &HostPool,
    clock: &mut u64,
    out: &mut Vec<(u64, Ipv6Packet)>,
) {
    let router = *pick(rng, &hosts.routers);
    let client = *pick(rng, &hosts.clients);
    let mut dir = Direction::new(rng, router, client, 0);
    dir.flow_label = rng.random::<u32>() & 0xF_FFFF;
    let (kind, code) = *pick(rng, &[(1u8, 0u8), (1, 3), (3, 0), (3, 1)]);
    let t = *clock + rng.random_range(200..=20_000);
    let mut payload = vec![kind, code];
    payload.extend_from_slice(&icmp_checksum_stub(rng));
    payload.extend_from_slice(&[0; 4]);
    // Embedded original: a plausible IPv6 header plus 8 payload bytes.
    let mut embedded = random_bytes(rng, 48);
    embedded[0] = 0x60;
    payload.extend_from_slice(&embedded);
    out.push((t, dir.packet(58, payload, t)));
}

/// Generate `config.normal_count` background packets, all labeled Normal.
/// Identical configs produce byte-identical captures.
pub fn generate_background(config: &MixConfig) -> LabeledCapture {
    let hosts = build_host_pool(config.seed);
    let mut rng = stream_rng(config.seed, STREAM_FLOWS);
    let target = config.normal_count;
    let mut timed: Vec<(u64, Ipv6Packet)> = Vec::with_capacity(target + 200);
    let mut clock: u64 = 0;
    while timed.len() < target {
        clock += rng.random_range(500..=30_000);
        let mut c = clock;
        let r = rng.random::<f64>();
        if r < 0.42 {
            tcp_flow(&mut rng, &hosts, false, &mut c, &mut timed);
        } else if r < 0.50 {
            tcp_flow(&mut rng, &hosts, true, &mut c, &mut timed);
        } else if r < 0.80 {
            udp_flow(&mut rng, &hosts, &mut c, &mut timed);
        } else if r < 0.92 {
            echo_flow(&mut rng, &hosts, &mut c, &mut timed);
        } else {
            error_packet(&mut rng, &hosts, &mut c, &mut timed);
        }
    }
    // Stable sort by time, then cut to size: per flow only a suffix can be
    // dropped, so sequence continuity inside surviving flows is preserved.
    timed.sort_by_key(|(t, _)| *t);
    timed.truncate(target);
    let mut capture = LabeledCapture::default();
    for (_, packet) in timed {
        capture.push(packet, ChannelKind::Normal, Provenance::Background);
    }
    capture
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::build_flow_table;
    use crate::pcap::write_pcap_bytes;

    fn config(n: usize, seed: u64) -> MixConfig {
        MixConfig {
            normal_count: n,
            seed,
            ..MixConfig::default()
        }
    }

    #[test]
    fn exact_count_and_all_normal() {
        let capture = generate_background(&config(500, 7));
        assert_eq!(capture.len(), 500);
        assert!(capture.labels.iter().all(|&l| l == ChannelKind::Normal));
        assert!(capture
            .provenance
            .iter()
            .all(|&p| p == Provenance::Background));
    }

    #[test]
    fn identical_seeds_are_byte_identical() {
        let a = generate_background(&config(400, 42));
        let b = generate_background(&config(400, 42));
        let bytes_a = write_pcap_bytes(&a.packets, LINKTYPE_ETHERNET).unwrap();
        let bytes_b = write_pcap_bytes(&b.packets, LINKTYPE_ETHERNET).unwrap();
        assert_eq!(bytes_a, bytes_b);
        let c = generate_background(&config(400, 43));
        let bytes_c = write_pcap_bytes(&c.packets, LINKTYPE_ETHERNET).unwrap();
        assert_ne!(bytes_a, bytes_c);
    }

    #[test]
    fn timestamps_never_decrease() {
        let capture = generate_background(&config(600, 3));
        let micros: Vec<u64> = capture
            .packets
            .iter()
            .map(|p| p.ts_sec as u64 * 1_000_000 + p.ts_usec as u64)
            .collect();
        assert!(micros.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn hop_limits_stay_in_mixture_ranges() {
        let capture = generate_background(&config(2000, 42));
        let in_range = |h: u8| (48..=60).contains(&h) || (109..=114).contains(&h) || h >= 233;
        assert!(capture.packets.iter().all(|p| in_range(p.hop_limit)));
        // Both dominant modes are populated.
        let low = capture.packets.iter().filter(|p| p.hop_limit <= 60).count();
        let mid = capture
            .packets
            .iter()
            .filter(|p| (109..=114).contains(&p.hop_limit))
            .count();
        assert!(low > mid && mid > 0, "low {low} mid {mid}");
    }

    #[test]
    fn flow_statistics_match_protocol_rules() {
        let capture = generate_background(&config(3000, 42));
        let table = build_flow_table(&capture.packets);
        let mut saw_udp = false;
        for record in table.values() {
            match record.key.next_header {
                6 => assert_eq!(
                    record.distinct_flow_labels.len(),
                    1,
                    "TCP labels are flow-constant"
                ),
                17 => {
                    saw_udp = true;
                    assert_eq!(record.distinct_flow_labels.len(), 1);
                }
                _ => {}
            }
        }
        assert!(saw_udp);
        // Declared length always matches the payload on the wire.
        assert!(capture
            .packets
            .iter()
            .all(|p| p.payload_length_declared as usize == p.payload.len()));
        // DSCP rides whole flows, so the packet-weighted zero fraction
        // swings with flow sizes; it still stays clearly dominant.
        let zero_dscp = capture.packets.iter().filter(|p| p.dscp() == 0).count();
        assert!(zero_dscp as f64 >= 0.85 * capture.len() as f64);
    }

    #[test]
    fn tcp_sequences_are_contiguous_per_direction() {
        use crate::flow::tcp_segment;
        let capture = generate_background(&config(2000, 5));
        let table = build_flow_table(&capture.packets);
        for record in table.values().filter(|r| r.key.next_header == 6) {
            let mut expected: Option<u32> = None;
            for &i in &record.packet_indices {
                let seg = tcp_segment(&capture.packets[i]).expect("full TCP header");
                if let Some(e) = expected {
                    assert_eq!(seg.seq, e, "contiguous sequence in flow");
                }
                expected = Some(seg.seq.wrapping_add(seg.data_len as u32));
            }
        }
    }
}
