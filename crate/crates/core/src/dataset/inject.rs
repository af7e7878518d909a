//! Covert-channel injection into labeled captures, and the mixed-dataset
//! builder.
//!
//! Insertion channels (FlowLabel, Length, Address) add new packets; the
//! HopLimit channel overwrites hop limits of existing packets in place.
//! Inserted packets blend in: timestamps are interpolated between their
//! capture neighbors, header constants are copied from the host flow, and
//! declared lengths match payloads except where a channel says otherwise.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::channels::{
    bits_from_bytes, embed_address, embed_flowlabel, embed_hoplimit, embed_length,
    trits_from_bytes, ChannelKind, HopLimitMode,
};
use crate::crypto::SharedSecret;
use crate::flow::{build_flow_table, tcp_segment, FlowRecord};
use crate::packet::Ipv6Packet;
use crate::rng::stream_rng;

use super::background::{generate_background, make_packet, sample_hop_limit, tcp_payload, udp_payload};
use super::{DatasetError, LabeledCapture, MixConfig, Provenance};

const STREAM_INJECT: u64 = 20;
const STREAM_MIX_HOPLIMIT: u64 = 21;
const STREAM_MIX_LENGTH: u64 = 22;
const STREAM_MIX_FLOWLABEL: u64 = 23;
const STREAM_MIX_ADDRESS: u64 = 24;

#[derive(Debug, Clone)]
pub struct InjectOptions {
    pub seed: u64,
    pub hoplimit_mode: HopLimitMode,
}

impl Default for InjectOptions {
    fn default() -> Self {
        InjectOptions {
            seed: 42,
            hoplimit_mode: HopLimitMode::Binary,
        }
    }
}

/// What an injection did: where the carriers ended up, and for modulated
/// packets, the hop limits they had before.
#[derive(Debug, Clone)]
pub struct InjectSummary {
    pub channel: ChannelKind,
    pub carrier_indices: Vec<usize>,
    pub original_hop_limits: Vec<u8>,
}

fn micros_of(p: &Ipv6Packet) -> u64 {
    p.ts_sec as u64 * 1_000_000 + p.ts_usec as u64
}

fn set_micros(p: &mut Ipv6Packet, micros: u64) {
    p.ts_sec = (micros / 1_000_000) as u32;
    p.ts_usec = (micros % 1_000_000) as u32;
}

/// Insert carrier packets after the given anchor indices (ascending, in
/// message order) with timestamps interpolated between each anchor and its
/// successor. Returns the carriers' final capture indices, ascending.
fn insert_after_anchors(
    capture: &mut LabeledCapture,
    entries: Vec<(usize, Ipv6Packet)>,
    label: ChannelKind,
) -> Vec<usize> {
    debug_assert!(entries.windows(2).all(|w| w[0].0 <= w[1].0));
    let mut final_indices = Vec::with_capacity(entries.len());
    let mut offset = 0usize;
    let mut entries = entries.into_iter().peekable();
    while let Some((anchor, packet)) = entries.next() {
        // Collect the whole group sharing this anchor.
        let mut group = vec![packet];
        while entries.peek().is_some_and(|(a, _)| *a == anchor) {
            group.push(entries.next().unwrap().1);
        }
        let g = group.len() as u64;
        let t0 = micros_of(&capture.packets[anchor + offset]);
        let t1 = capture
            .packets
            .get(anchor + offset + 1)
            .map(micros_of)
            .unwrap_or(t0 + 1_000 * (g + 1))
            .max(t0);
        for (j, mut p) in group.into_iter().enumerate() {
            set_micros(&mut p, t0 + (t1 - t0) * (j as u64 + 1) / (g + 1));
            let at = anchor + offset + 1;
            capture.insert(at, p, label, Provenance::Inserted);
            final_indices.push(at);
            offset += 1;
        }
    }
    final_indices
}

/// Nondecreasing anchor assignment: `count` carriers spread over the flow's
/// packets in capture order, so carrier order equals message order.
fn spread_anchors(flow_indices: &[usize], count: usize) -> Vec<usize> {
    let m = flow_indices.len();
    (0..count).map(|j| flow_indices[j * m / count]).collect()
}

fn flow_is_untouched(capture: &LabeledCapture, record: &FlowRecord) -> bool {
    record
        .packet_indices
        .iter()
        .all(|&i| capture.labels[i] == ChannelKind::Normal)
}

/// Eligible host flows for an insertion channel, in deterministic key order.
fn candidate_flows(
    capture: &LabeledCapture,
    channel: ChannelKind,
) -> Vec<FlowRecord> {
    let table = build_flow_table(&capture.packets);
    table
        .into_values()
        .filter(|r| match channel {
            ChannelKind::FlowLabel => {
                r.key.next_header == 17
                    || r.packet_indices
                        .iter()
                        .all(|&i| capture.packets[i].is_icmpv6_error())
            }
            ChannelKind::Length => r.key.next_header == 6 && r.key.src_port.is_some(),
            // HopLimit modulates anything; Address needs no host flow.
            ChannelKind::HopLimit => true,
            _ => true,
        })
        .filter(|r| flow_is_untouched(capture, r))
        .collect()
}

/// Clone-and-vary carrier for a FlowLabel message: a fresh UDP datagram (or
/// ICMPv6 error) on the host flow's addresses; the label itself is written
/// by the embedding step.
fn flowlabel_carrier(
    rng: &mut ChaCha12Rng,
    template: &Ipv6Packet,
) -> Ipv6Packet {
    let mut p = template.clone();
    if p.is_udp() {
        let src_port = u16::from_be_bytes([p.payload[0], p.payload[1]]);
        let dst_port = u16::from_be_bytes([p.payload[2], p.payload[3]]);
        let data_len = rng.random_range(12..=400);
        p.payload = udp_payload(rng, src_port, dst_port, data_len);
    } else {
        let mut payload = p.payload.clone();
        // Fresh checksum and embedded bytes, same error type and code.
        for b in payload.iter_mut().skip(2) {
            *b = rng.random();
        }
        p.payload = payload;
    }
    p.payload_length_declared = p.payload.len() as u16;
    p.orig_len = p.wire_len() as u32;
    p
}

fn insert_flowlabel_message(
    capture: &mut LabeledCapture,
    flow: &FlowRecord,
    message: &[u8],
    secret: &SharedSecret,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<usize>, DatasetError> {
    let needed = message.len().div_ceil(2);
    let template_index = *flow.packet_indices.last().expect("non-empty flow");
    let template = capture.packets[template_index].clone();
    let anchors = spread_anchors(&flow.packet_indices, needed);
    let entries: Vec<(usize, Ipv6Packet)> = anchors
        .into_iter()
        .map(|a| (a, flowlabel_carrier(rng, &template)))
        .collect();
    let indices = insert_after_anchors(capture, entries, ChannelKind::FlowLabel);
    embed_flowlabel(&mut capture.packets, &indices, message, secret)?;
    Ok(indices)
}

/// Pure-ACK carrier continuing the flow's running sequence at the insertion
/// point; the declared length is overwritten by the embedding step.
fn length_carrier(
    rng: &mut ChaCha12Rng,
    template: &Ipv6Packet,
    seq: u32,
    ack: u32,
    window: u16,
) -> Ipv6Packet {
    let seg = tcp_segment(template).expect("validated TCP template");
    let mut p = template.clone();
    p.payload = tcp_payload(rng, seg.src_port, seg.dst_port, seq, ack, 0x10, window, 0);
    p.payload_length_declared = p.payload.len() as u16;
    p.orig_len = p.wire_len() as u32;
    p
}

fn insert_length_message(
    capture: &mut LabeledCapture,
    flow: &FlowRecord,
    message: &[u8],
    secret: &SharedSecret,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<usize>, DatasetError> {
    let needed = message.len().div_ceil(2);
    let anchors = spread_anchors(&flow.packet_indices, needed);
    // Running sequence right after each flow packet, so a zero-length carrier
    // inserted there continues the stream without disturbing it.
    let mut running = std::collections::HashMap::new();
    for &i in &flow.packet_indices {
        let seg = tcp_segment(&capture.packets[i]).expect("generated TCP flow");
        let end = seg.seq.wrapping_add(seg.data_len as u32);
        let ack = u32::from_be_bytes(capture.packets[i].payload[8..12].try_into().unwrap());
        let window = u16::from_be_bytes(capture.packets[i].payload[14..16].try_into().unwrap());
        running.insert(i, (end, ack, window));
    }
    let template = capture.packets[*flow.packet_indices.last().unwrap()].clone();
    let entries: Vec<(usize, Ipv6Packet)> = anchors
        .into_iter()
        .map(|a| {
            let (seq, ack, window) = running[&a];
            (a, length_carrier(rng, &template, seq, ack, window))
        })
        .collect();
    let indices = insert_after_anchors(capture, entries, ChannelKind::Length);
    embed_length(&mut capture.packets, &indices, message, secret)?;
    Ok(indices)
}

/// Standalone Address-channel carrier: one fresh UDP datagram from a covert
/// prefix; the interface identifier is overwritten by the embedding step.
fn address_carrier(
    rng: &mut ChaCha12Rng,
    covert_prefix: &[u8; 8],
    dst: [u8; 16],
) -> Ipv6Packet {
    let mut src = [0u8; 16];
    src[..8].copy_from_slice(covert_prefix);
    let src_port = rng.random_range(32768..=60999);
    let dst_port = [443u16, 53, 123][rng.random_range(0..3)];
    let data_len = rng.random_range(16..=220);
    let payload = udp_payload(rng, src_port, dst_port, data_len);
    make_packet(
        src,
        dst,
        17,
        sample_hop_limit(rng),
        rng.random::<u32>() & 0xF_FFFF,
        0,
        payload,
        0, // timestamp set on insertion
    )
}

fn insert_address_message(
    capture: &mut LabeledCapture,
    message: &[u8],
    secret: &SharedSecret,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<usize>, DatasetError> {
    let needed = message.len().div_ceil(8);
    let mut covert_prefix = [0u8; 8];
    covert_prefix[..4].copy_from_slice(&[0x20, 0x01, 0x0d, 0xb8]);
    for b in &mut covert_prefix[4..] {
        *b = rng.random();
    }
    let mut anchors: Vec<usize> = (0..needed)
        .map(|_| rng.random_range(0..capture.len()))
        .collect();
    anchors.sort_unstable();
    let entries: Vec<(usize, Ipv6Packet)> = anchors
        .into_iter()
        .map(|a| {
            let dst = capture.packets[rng.random_range(0..capture.len())].dst_addr;
            (a, address_carrier(rng, &covert_prefix, dst))
        })
        .collect();
    let indices = insert_after_anchors(capture, entries, ChannelKind::Address);
    embed_address(&mut capture.packets, &indices, message, secret)?;
    Ok(indices)
}

/// Overwrite hop limits of one flow's leading packets with message symbols.
fn modulate_hoplimit_flow(
    capture: &mut LabeledCapture,
    flow: &FlowRecord,
    symbols: &[u8],
    mode: HopLimitMode,
) -> Result<(Vec<usize>, Vec<u8>), DatasetError> {
    let indices: Vec<usize> = flow.packet_indices[..symbols.len()].to_vec();
    let originals = indices.iter().map(|&i| capture.packets[i].hop_limit).collect();
    embed_hoplimit(&mut capture.packets, &indices, symbols, mode)?;
    for &i in &indices {
        capture.labels[i] = ChannelKind::HopLimit;
        capture.provenance[i] = Provenance::Modulated;
    }
    Ok((indices, originals))
}

/// Inject one covert message into an existing capture.
///
/// FlowLabel and Length messages ride a single randomly chosen eligible flow
/// (UDP/ICMPv6-error and TCP respectively) as newly inserted packets;
/// Address messages become standalone packets at random positions; HopLimit
/// messages overwrite the hop limits of one flow with enough untouched
/// packets. Carrier capture order always equals message order.
pub fn inject(
    capture: &mut LabeledCapture,
    channel: ChannelKind,
    message: &[u8],
    secret: &SharedSecret,
    options: &InjectOptions,
) -> Result<InjectSummary, DatasetError> {
    let mut rng = stream_rng(options.seed, STREAM_INJECT);
    let mut summary = InjectSummary {
        channel,
        carrier_indices: Vec::new(),
        original_hop_limits: Vec::new(),
    };
    match channel {
        ChannelKind::FlowLabel => {
            let flows = candidate_flows(capture, channel);
            if flows.is_empty() {
                return Err(DatasetError::NoEligibleFlow { channel });
            }
            let flow = &flows[rng.random_range(0..flows.len())];
            summary.carrier_indices =
                insert_flowlabel_message(capture, flow, message, secret, &mut rng)?;
        }
        ChannelKind::Length => {
            let flows = candidate_flows(capture, channel);
            if flows.is_empty() {
                return Err(DatasetError::NoEligibleFlow { channel });
            }
            let flow = &flows[rng.random_range(0..flows.len())];
            summary.carrier_indices =
                insert_length_message(capture, flow, message, secret, &mut rng)?;
        }
        ChannelKind::Address => {
            if capture.is_empty() {
                return Err(DatasetError::NoEligibleFlow { channel });
            }
            summary.carrier_indices = insert_address_message(capture, message, secret, &mut rng)?;
        }
        ChannelKind::HopLimit => {
            let symbols = match options.hoplimit_mode {
                HopLimitMode::Binary => bits_from_bytes(message),
                HopLimitMode::Ternary => trits_from_bytes(message),
            };
            let flows: Vec<FlowRecord> = candidate_flows(capture, channel)
                .into_iter()
                .filter(|f| f.packet_indices.len() >= symbols.len())
                .collect();
            if flows.is_empty() {
                return Err(DatasetError::NoEligibleFlow { channel });
            }
            let flow = &flows[rng.random_range(0..flows.len())];
            let (indices, originals) =
                modulate_hoplimit_flow(capture, flow, &symbols, options.hoplimit_mode)?;
            summary.carrier_indices = indices;
            summary.original_hop_limits = originals;
        }
        ChannelKind::Normal => {}
    }
    Ok(summary)
}

fn random_message(rng: &mut ChaCha12Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.random()).collect()
}

/// Per-flow message lengths are drawn from 8..=64 bytes, shortened at the
/// end so the channel's packet budget is hit exactly.
fn draw_message_len(rng: &mut ChaCha12Rng, per_packet: usize, remaining: usize) -> usize {
    let len = rng.random_range(8..=64usize);
    if len.div_ceil(per_packet) > remaining {
        remaining * per_packet
    } else {
        len
    }
}

/// Build a labeled mixed dataset whose label histogram equals `config`
/// exactly.
///
/// Background is generated with `normal_count` plus the HopLimit budget so
/// that in-place modulation leaves exactly `normal_count` Normal packets;
/// the insertion channels then add packets on top. Each channel draws from
/// its own seeded stream, so the result is deterministic in `config.seed`.
pub fn build_mixed_dataset(
    config: &MixConfig,
    secret: &SharedSecret,
) -> Result<LabeledCapture, DatasetError> {
    let hoplimit_budget = config.covert_count(ChannelKind::HopLimit);
    let background = MixConfig {
        normal_count: config.normal_count + hoplimit_budget,
        covert_counts: Default::default(),
        seed: config.seed,
    };
    let mut capture = generate_background(&background);

    // HopLimit: whole TCP flows, random bit messages sized to each flow.
    let mut rng = stream_rng(config.seed, STREAM_MIX_HOPLIMIT);
    let mut remaining = hoplimit_budget;
    if remaining > 0 {
        let mut flows: Vec<FlowRecord> = candidate_flows(&capture, ChannelKind::Length);
        flows.shuffle(&mut rng);
        for flow in &flows {
            if remaining == 0 {
                break;
            }
            let take = flow.packet_indices.len().min(remaining);
            let symbols: Vec<u8> = (0..take).map(|_| rng.random_range(0..=1u8)).collect();
            modulate_hoplimit_flow(&mut capture, flow, &symbols, HopLimitMode::Binary)?;
            remaining -= take;
        }
        if remaining > 0 {
            return Err(DatasetError::InsufficientBackground {
                channel: ChannelKind::HopLimit,
                needed: remaining,
            });
        }
    }

    // Length: one message per untouched TCP flow.
    let mut rng = stream_rng(config.seed, STREAM_MIX_LENGTH);
    let mut remaining = config.covert_count(ChannelKind::Length);
    while remaining > 0 {
        let flows = candidate_flows(&capture, ChannelKind::Length);
        if flows.is_empty() {
            return Err(DatasetError::InsufficientBackground {
                channel: ChannelKind::Length,
                needed: remaining,
            });
        }
        let flow = &flows[rng.random_range(0..flows.len())];
        let len = draw_message_len(&mut rng, 2, remaining);
        let message = random_message(&mut rng, len);
        let indices = insert_length_message(&mut capture, flow, &message, secret, &mut rng)?;
        remaining -= indices.len();
    }

    // FlowLabel: one message per untouched UDP flow.
    let mut rng = stream_rng(config.seed, STREAM_MIX_FLOWLABEL);
    let mut remaining = config.covert_count(ChannelKind::FlowLabel);
    while remaining > 0 {
        let flows: Vec<FlowRecord> = candidate_flows(&capture, ChannelKind::FlowLabel)
            .into_iter()
            .filter(|f| f.key.next_header == 17)
            .collect();
        if flows.is_empty() {
            return Err(DatasetError::InsufficientBackground {
                channel: ChannelKind::FlowLabel,
                needed: remaining,
            });
        }
        let flow = &flows[rng.random_range(0..flows.len())];
        let len = draw_message_len(&mut rng, 2, remaining);
        let message = random_message(&mut rng, len);
        let indices = insert_flowlabel_message(&mut capture, flow, &message, secret, &mut rng)?;
        remaining -= indices.len();
    }

    // Address: standalone packets at random positions.
    let mut rng = stream_rng(config.seed, STREAM_MIX_ADDRESS);
    let mut remaining = config.covert_count(ChannelKind::Address);
    while remaining > 0 {
        let len = draw_message_len(&mut rng, 8, remaining);
        let message = random_message(&mut rng, len);
        let indices = insert_address_message(&mut capture, &message, secret, &mut rng)?;
        remaining -= indices.len();
    }

    Ok(capture)
}
