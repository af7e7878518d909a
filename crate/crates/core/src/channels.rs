//! The four covert channels in the fixed IPv6 header.
//!
//! - HopLimit: carrier hop limits are set to symbol values (64, 128, and 255
//!   for the ternary alphabet); decoding tolerates up to `assumed_max_hops`
//!   in-transit decrements per packet.
//! - FlowLabel: the label's leading nibble is a position marker drawn from
//!   the shared 16-nibble permutation (so receivers can restore order within
//!   16-packet blocks); the low 16 bits carry two RC4 ciphertext bytes.
//! - Length: the declared payload length is replaced with two message bytes,
//!   ASCII-shifted then RC4-encrypted; the actual payload is untouched.
//! - Address: the low 8 bytes of the source address carry RC4 ciphertext;
//!   the routing prefix (bytes 0..8) is untouched.
//!
//! Every byte-oriented channel runs ONE RC4 stream across the whole message,
//! not one per packet; repeated plaintext chunks therefore produce distinct
//! ciphertext in consecutive carriers.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::crypto::{ascii_shift, SharedSecret, ShiftDirection};
use crate::packet::Ipv6Packet;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChannelError {
    #[error("message needs {needed} carrier packets, only {available} available")]
    Capacity { needed: usize, available: usize },
    #[error("carrier {index} has next header {next_header}, not a UDP or ICMPv6-error packet")]
    IneligibleCarrier { index: usize, next_header: u8 },
    #[error("carrier index {index} out of range for {packet_count} packets")]
    BadCarrierIndex { index: usize, packet_count: usize },
    #[error("symbol {0} outside the hop-limit alphabet")]
    InvalidSymbol(u8),
    #[error("message declared {wanted} bytes but only {got} were recovered")]
    Incomplete { wanted: usize, got: usize },
}

// ---- channel identities ----

/// Channel identity; doubles as the per-packet class label (Normal marks
/// untouched traffic).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChannelKind {
    HopLimit,
    Address,
    Length,
    FlowLabel,
    Normal,
}

pub const ALL_CHANNEL_KINDS: [ChannelKind; 5] = [
    ChannelKind::HopLimit,
    ChannelKind::Address,
    ChannelKind::Length,
    ChannelKind::FlowLabel,
    ChannelKind::Normal,
];

impl ChannelKind {
    /// Stable class index used by the models; ties break toward lower values.
    pub fn index(self) -> usize {
        match self {
            ChannelKind::HopLimit => 0,
            ChannelKind::Address => 1,
            ChannelKind::Length => 2,
            ChannelKind::FlowLabel => 3,
            ChannelKind::Normal => 4,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        ALL_CHANNEL_KINDS.iter().copied().find(|k| k.index() == index)
    }

    pub fn label(self) -> &'static str {
        match self {
            ChannelKind::HopLimit => "hoplimit",
            ChannelKind::Address => "address",
            ChannelKind::Length => "length",
            ChannelKind::FlowLabel => "flowlabel",
            ChannelKind::Normal => "normal",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ChannelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_CHANNEL_KINDS
            .iter()
            .copied()
            .find(|k| k.label() == s)
            .ok_or_else(|| format!("unknown channel label {s:?}"))
    }
}

/// Theoretical capacity of `packet_count` carriers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelCapacity {
    Bytes(u64),
    Bits(u64),
}

pub fn channel_capacity(
    channel: ChannelKind,
    packet_count: u64,
    hoplimit_mode: HopLimitMode,
) -> ChannelCapacity {
    match channel {
        ChannelKind::FlowLabel | ChannelKind::Length => ChannelCapacity::Bytes(2 * packet_count),
        ChannelKind::Address => ChannelCapacity::Bytes(8 * packet_count),
        ChannelKind::HopLimit => match hoplimit_mode {
            HopLimitMode::Binary => ChannelCapacity::Bits(packet_count),
            HopLimitMode::Ternary => {
                ChannelCapacity::Bits((packet_count as f64 * 3f64.log2()).floor() as u64)
            }
        },
        ChannelKind::Normal => ChannelCapacity::Bytes(0),
    }
}

// ---- shared helpers ----

fn check_indices(packets: &[Ipv6Packet], carrier_indices: &[usize]) -> Result<(), ChannelError> {
    for &index in carrier_indices {
        if index >= packets.len() {
            return Err(ChannelError::BadCarrierIndex {
                index,
                packet_count: packets.len(),
            });
        }
    }
    Ok(())
}

fn require_carriers(needed: usize, available: usize) -> Result<(), ChannelError> {
    if needed > available {
        return Err(ChannelError::Capacity { needed, available });
    }
    Ok(())
}

/// Message split into two-byte chunks, zero-padded to even length.
fn padded_pairs(message: &[u8]) -> Vec<u8> {
    let mut padded = message.to_vec();
    if padded.len() % 2 == 1 {
        padded.push(0);
    }
    padded
}

fn truncate_to_length(
    mut bytes: Vec<u8>,
    message_length: Option<usize>,
) -> Result<Vec<u8>, ChannelError> {
    if let Some(wanted) = message_length {
        if bytes.len() < wanted {
            return Err(ChannelError::Incomplete {
                wanted,
                got: bytes.len(),
            });
        }
        bytes.truncate(wanted);
    }
    Ok(bytes)
}

// ---- FlowLabel channel ----

/// A packet that can plausibly carry a randomized flow label: UDP, or an
/// ICMPv6 error message. TCP labels are flow-constant in real traffic, so
/// the channel never touches them.
pub fn flowlabel_eligible(packet: &Ipv6Packet) -> bool {
    packet.is_udp() || packet.is_icmpv6_error()
}

/// Write `message` into the flow labels of the first ceil(len/2) carriers.
/// Each label is (sequence nibble << 16) | two ciphertext bytes; one RC4
/// stream covers the whole message.
pub fn embed_flowlabel(
    packets: &mut [Ipv6Packet],
    carrier_indices: &[usize],
    message: &[u8],
    secret: &SharedSecret,
) -> Result<(), ChannelError> {
    check_indices(packets, carrier_indices)?;
    let padded = padded_pairs(message);
    let needed = padded.len() / 2;
    require_carriers(needed, carrier_indices.len())?;
    for &index in &carrier_indices[..needed] {
        let p = &packets[index];
        if !flowlabel_eligible(p) {
            return Err(ChannelError::IneligibleCarrier {
                index,
                next_header: p.next_header,
            });
        }
    }
    let ciphertext = secret.cipher().apply(&padded);
    for (position, &index) in carrier_indices[..needed].iter().enumerate() {
        let pair = u32::from(ciphertext[2 * position]) << 8
            | u32::from(ciphertext[2 * position + 1]);
        packets[index].flow_label = u32::from(secret.sequence_nibble(position)) << 16 | pair;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowLabelExtraction {
    pub bytes: Vec<u8>,
    /// Packets ignored because they cannot carry the channel.
    pub skipped_non_carriers: usize,
}

/// Recover a FlowLabel-channel message from `packets` in capture order.
///
/// Carriers may arrive re-ordered within each 16-packet block: the leading
/// nibble's position in the shared permutation restores the embedding order.
/// Packets that cannot carry the channel are skipped and counted. With
/// `message_length` given, the result is truncated (dropping the pad byte of
/// odd-length messages); without it, every recovered byte is returned.
pub fn extract_flowlabel(
    packets: &[Ipv6Packet],
    secret: &SharedSecret,
    message_length: Option<usize>,
) -> Result<FlowLabelExtraction, ChannelError> {
    let mut skipped = 0usize;
    let mut carriers: Vec<(usize, u32)> = Vec::new();
    for p in packets {
        if !flowlabel_eligible(p) {
            skipped += 1;
            continue;
        }
        let nibble = (p.flow_label >> 16) as u8;
        match secret.sequence_position(nibble) {
            Some(pos) => carriers.push((pos, p.flow_label & 0xFFFF)),
            None => skipped += 1,
        }
    }
    let mut ciphertext = Vec::with_capacity(carriers.len() * 2);
    for block in carriers.chunks_mut(16) {
        block.sort_by_key(|&(pos, _)| pos);
        for &(_, pair) in block.iter() {
            ciphertext.push((pair >> 8) as u8);
            ciphertext.push(pair as u8);
        }
    }
    let bytes = truncate_to_length(secret.cipher().apply(&ciphertext), message_length)?;
    Ok(FlowLabelExtraction {
        bytes,
        skipped_non_carriers: skipped,
    })
}

// ---- Length channel ----

/// Write `message` into the declared payload lengths of the first
/// ceil(len/2) carriers: ASCII shift, then one RC4 stream, two bytes per
/// packet. Actual payload bytes are never touched.
pub fn embed_length(
    packets: &mut [Ipv6Packet],
    carrier_indices: &[usize],
    message: &[u8],
    secret: &SharedSecret,
) -> Result<(), ChannelError> {
    check_indices(packets, carrier_indices)?;
    let padded = padded_pairs(message);
    let needed = padded.len() / 2;
    require_carriers(needed, carrier_indices.len())?;
    let shifted = ascii_shift(&padded, secret.ascii_shift(), ShiftDirection::Forward);
    let ciphertext = secret.cipher().apply(&shifted);
    for (position, &index) in carrier_indices[..needed].iter().enumerate() {
        packets[index].payload_length_declared =
            u16::from_be_bytes([ciphertext[2 * position], ciphertext[2 * position + 1]]);
    }
    Ok(())
}

/// Recover a Length-channel message from the declared payload lengths of
/// `packets`, in order.
pub fn extract_length(
    packets: &[Ipv6Packet],
    secret: &SharedSecret,
    message_length: Option<usize>,
) -> Result<Vec<u8>, ChannelError> {
    let ciphertext: Vec<u8> = packets
        .iter()
        .flat_map(|p| p.payload_length_declared.to_be_bytes())
        .collect();
    let shifted = secret.cipher().apply(&ciphertext);
    let bytes = ascii_shift(&shifted, secret.ascii_shift(), ShiftDirection::Backward);
    truncate_to_length(bytes, message_length)
}

// ---- Address channel ----

/// Write `message` into the low 8 source-address bytes of the first
/// ceil(len/8) carriers (one RC4 stream, zero-padded final block). The
/// routing prefix in bytes 0..8 is preserved.
pub fn embed_address(
    packets: &mut [Ipv6Packet],
    carrier_indices: &[usize],
    message: &[u8],
    secret: &SharedSecret,
) -> Result<(), ChannelError> {
    check_indices(packets, carrier_indices)?;
    let needed = message.len().div_ceil(8);
    require_carriers(needed, carrier_indices.len())?;
    let mut padded = message.to_vec();
    padded.resize(needed * 8, 0);
    let ciphertext = secret.cipher().apply(&padded);
    for (position, &index) in carrier_indices[..needed].iter().enumerate() {
        packets[index].src_addr[8..16]
            .copy_from_slice(&ciphertext[8 * position..8 * position + 8]);
    }
    Ok(())
}

/// Recover an Address-channel message from the low source-address bytes of
/// `packets`, in order.
pub fn extract_address(
    packets: &[Ipv6Packet],
    secret: &SharedSecret,
    message_length: Option<usize>,
) -> Result<Vec<u8>, ChannelError> {
    let ciphertext: Vec<u8> = packets.iter().flat_map(|p| p.src_addr[8..16].to_vec()).collect();
    truncate_to_length(secret.cipher().apply(&ciphertext), message_length)
}

// ---- HopLimit channel ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopLimitMode {
    Binary,
    Ternary,
}

impl HopLimitMode {
    pub fn alphabet_size(self) -> u8 {
        match self {
            HopLimitMode::Binary => 2,
            HopLimitMode::Ternary => 3,
        }
    }
}

/// Hop-limit values the symbols are written as.
pub const HOPLIMIT_SYMBOL_VALUES: [u8; 3] = [64, 128, 255];

/// Decode tolerance: how many hops a packet is assumed to traverse at most
/// between sender and capture point.
pub const DEFAULT_ASSUMED_MAX_HOPS: u8 = 31;

/// Write `symbols` (one per carrier, values < alphabet size) into carrier
/// hop limits.
pub fn embed_hoplimit(
    packets: &mut [Ipv6Packet],
    carrier_indices: &[usize],
    symbols: &[u8],
    mode: HopLimitMode,
) -> Result<(), ChannelError> {
    check_indices(packets, carrier_indices)?;
    require_carriers(symbols.len(), carrier_indices.len())?;
    for &s in symbols {
        if s >= mode.alphabet_size() {
            return Err(ChannelError::InvalidSymbol(s));
        }
    }
    for (&index, &s) in carrier_indices.iter().zip(symbols) {
        packets[index].hop_limit = HOPLIMIT_SYMBOL_VALUES[s as usize];
    }
    Ok(())
}

/// Decode one symbol per packet from its hop limit, tolerating up to
/// `assumed_max_hops` decrements: values in [64 - max_hops, 96] read as 0,
/// [97, 191] as 1, and >= 192 as 2 (ternary mode only). Anything else is a
/// decode failure (`None`) at that position.
pub fn extract_hoplimit(
    packets: &[Ipv6Packet],
    mode: HopLimitMode,
    assumed_max_hops: u8,
) -> Vec<Option<u8>> {
    let low0 = 64u8.saturating_sub(assumed_max_hops);
    packets
        .iter()
        .map(|p| match p.hop_limit {
            v if v >= low0 && v <= 96 => Some(0),
            v if (97..=191).contains(&v) => Some(1),
            v if v >= 192 && mode == HopLimitMode::Ternary => Some(2),
            _ => None,
        })
        .collect()
}

// ---- symbol packing ----

/// Bytes to bits, most significant bit first.
pub fn bits_from_bytes(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect()
}

/// Bits (0/1, MSB first) back to bytes; trailing partial groups are dropped.
pub fn bytes_from_bits(bits: &[u8]) -> Vec<u8> {
    bits.chunks_exact(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| acc << 1 | (b & 1)))
        .collect()
}

/// Bytes to base-3 digits, six per byte, most significant digit first.
pub fn trits_from_bytes(bytes: &[u8]) -> Vec<u8> {
    const POW3: [u16; 6] = [243, 81, 27, 9, 3, 1];
    bytes
        .iter()
        .flat_map(|&b| POW3.iter().map(move |&p| ((b as u16 / p) % 3) as u8))
        .collect()
}

/// Base-3 digits (six per byte, MSD first) back to bytes; trailing partial
/// groups are dropped and overlong values (> 255) are truncated mod 256.
pub fn bytes_from_trits(trits: &[u8]) -> Vec<u8> {
    trits
        .chunks_exact(6)
        .map(|c| c.iter().fold(0u16, |acc, &t| acc * 3 + t as u16) as u8)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{rc4_apply, EXAMPLE_SEQUENCE};
    use crate::packet::{IPV6_HEADER_LEN, LINKTYPE_RAW};

    fn secret() -> SharedSecret {
        SharedSecret::new(b"Key".to_vec(), EXAMPLE_SEQUENCE, 13).unwrap()
    }

    fn carrier(next_header: u8, payload: Vec<u8>) -> Ipv6Packet {
        Ipv6Packet {
            traffic_class: 0,
            flow_label: 0,
            payload_length_declared: payload.len() as u16,
            next_header,
            hop_limit: 55,
            src_addr: [0xAB; 16],
            dst_addr: [0xCD; 16],
            payload,
            ts_sec: 0,
            ts_usec: 0,
            link_type: LINKTYPE_RAW,
            link_prefix: Vec::new(),
            orig_len: IPV6_HEADER_LEN as u32 + 8,
        }
    }

    fn udp_carriers(n: usize) -> Vec<Ipv6Packet> {
        (0..n).map(|_| carrier(17, vec![0; 8])).collect()
    }

    const MESSAGE: &[u8] = b"This is a covert communication";

    #[test]
    fn flowlabel_nibbles_follow_sequence() {
        let mut packets = udp_carriers(16);
        let indices: Vec<usize> = (0..16).collect();
        embed_flowlabel(&mut packets, &indices, MESSAGE, &secret()).unwrap();
        let nibbles: Vec<u8> = packets[..15].iter().map(|p| (p.flow_label >> 16) as u8).collect();
        assert_eq!(
            nibbles,
            vec![0xE, 0xA, 0x7, 0x1, 0x2, 0x3, 0x4, 0x5, 0x6, 0x8, 0x9, 0xB, 0xC, 0xD, 0xF]
        );
        // 30 bytes need 15 carriers; the 16th is untouched.
        assert_eq!(packets[15].flow_label, 0);
    }

    #[test]
    fn flowlabel_low_bits_are_stream_ciphertext() {
        let mut packets = udp_carriers(15);
        let indices: Vec<usize> = (0..15).collect();
        embed_flowlabel(&mut packets, &indices, MESSAGE, &secret()).unwrap();
        let expected = rc4_apply(b"Key", MESSAGE).unwrap();
        for (i, p) in packets.iter().enumerate() {
            assert_eq!((p.flow_label >> 8) as u8, expected[2 * i]);
            assert_eq!(p.flow_label as u8, expected[2 * i + 1]);
        }
        // Repeated plaintext pairs land as different ciphertext pairs.
        let m = b"babab";
        let mut repeated = udp_carriers(3);
        embed_flowlabel(&mut repeated, &[0, 1, 2], m, &secret()).unwrap();
        assert_ne!(repeated[0].flow_label & 0xFFFF, repeated[1].flow_label & 0xFFFF);
    }

    #[test]
    fn flowlabel_roundtrip_with_block_shuffle() {
        let mut packets = udp_carriers(18);
        let indices: Vec<usize> = (0..18).collect();
        embed_flowlabel(&mut packets, &indices, b"a much longer covert message body!", &secret())
            .unwrap();
        // 34 bytes -> 17 carriers: one full block plus one packet.
        packets[..16].reverse();
        packets[16..18].swap(0, 1); // swaps carrier 16 with the idle carrier
        let got = extract_flowlabel(&packets, &secret(), Some(34)).unwrap();
        assert_eq!(got.bytes, b"a much longer covert message body!");
        assert_eq!(got.skipped_non_carriers, 0);
    }

    #[test]
    fn flowlabel_odd_length_drops_pad() {
        let mut packets = udp_carriers(2);
        embed_flowlabel(&mut packets, &[0, 1], b"abc", &secret()).unwrap();
        let got = extract_flowlabel(&packets, &secret(), Some(3)).unwrap();
        assert_eq!(got.bytes, b"abc");
        let raw = extract_flowlabel(&packets, &secret(), None).unwrap();
        assert_eq!(raw.bytes, b"abc\0");
    }

    #[test]
    fn flowlabel_rejects_tcp_carriers() {
        let mut packets = vec![carrier(17, vec![0; 8]), carrier(6, vec![0; 20])];
        let err = embed_flowlabel(&mut packets, &[0, 1], b"abcd", &secret()).unwrap_err();
        assert_eq!(
            err,
            ChannelError::IneligibleCarrier {
                index: 1,
                next_header: 6
            }
        );
        // ICMPv6 errors are eligible, echo requests are not.
        let mut packets = vec![carrier(58, vec![1, 0, 0, 0]), carrier(58, vec![128, 0, 0, 0])];
        assert!(embed_flowlabel(&mut packets, &[0], b"ab", &secret()).is_ok());
        let err = embed_flowlabel(&mut packets, &[1], b"ab", &secret()).unwrap_err();
        assert!(matches!(err, ChannelError::IneligibleCarrier { index: 1, .. }));
    }

    #[test]
    fn flowlabel_capacity_and_skip_counting() {
        let mut packets = udp_carriers(2);
        assert_eq!(
            embed_flowlabel(&mut packets, &[0, 1], b"abcde", &secret()).unwrap_err(),
            ChannelError::Capacity {
                needed: 3,
                available: 2
            }
        );

        let mut packets = udp_carriers(3);
        embed_flowlabel(&mut packets, &[0, 1, 2], b"abcdef", &secret()).unwrap();
        packets.insert(1, carrier(6, vec![0; 20])); // TCP noise is skipped
        let got = extract_flowlabel(&packets, &secret(), Some(6)).unwrap();
        assert_eq!(got.bytes, b"abcdef");
        assert_eq!(got.skipped_non_carriers, 1);
    }

    #[test]
    fn length_roundtrip_leaves_payload_alone() {
        let mut packets = udp_carriers(8);
        let before: Vec<Vec<u8>> = packets.iter().map(|p| p.payload.clone()).collect();
        embed_length(&mut packets, &(0..8).collect::<Vec<_>>(), b"covert chan", &secret()).unwrap();
        let after: Vec<Vec<u8>> = packets.iter().map(|p| p.payload.clone()).collect();
        assert_eq!(before, after);
        // Declared length no longer matches the actual payload.
        assert_ne!(packets[0].payload_length_declared as usize, packets[0].payload.len());
        let got = extract_length(&packets[..6], &secret(), Some(11)).unwrap();
        assert_eq!(got, b"covert chan");
    }

    #[test]
    fn length_shift_is_applied_before_encryption() {
        let mut packets = udp_carriers(1);
        embed_length(&mut packets, &[0], b"ab", &secret()).unwrap();
        let shifted = ascii_shift(b"ab", 13, ShiftDirection::Forward);
        let expected = rc4_apply(b"Key", &shifted).unwrap();
        assert_eq!(
            packets[0].payload_length_declared,
            u16::from_be_bytes([expected[0], expected[1]])
        );
    }

    #[test]
    fn length_incomplete_extraction_errors() {
        let mut packets = udp_carriers(4);
        embed_length(&mut packets, &[0, 1, 2, 3], b"12345678", &secret()).unwrap();
        assert_eq!(
            extract_length(&packets[..2], &secret(), Some(8)).unwrap_err(),
            ChannelError::Incomplete { wanted: 8, got: 4 }
        );
    }

    #[test]
    fn address_roundtrip_preserves_prefix() {
        let mut packets = udp_carriers(4);
        let msg = b"exfiltrating 25 characters!!!"; // 29 bytes -> 4 carriers
        embed_address(&mut packets, &[0, 1, 2, 3], msg, &secret()).unwrap();
        for p in &packets {
            assert_eq!(&p.src_addr[..8], &[0xAB; 8], "prefix untouched");
            assert_eq!(p.dst_addr, [0xCD; 16]);
        }
        assert_ne!(&packets[0].src_addr[8..], &[0xAB; 8]);
        let got = extract_address(&packets, &secret(), Some(msg.len())).unwrap();
        assert_eq!(got, msg);
    }

    #[test]
    fn address_capacity() {
        let mut packets = udp_carriers(2);
        assert_eq!(
            embed_address(&mut packets, &[0, 1], &[0u8; 17], &secret()).unwrap_err(),
            ChannelError::Capacity {
                needed: 3,
                available: 2
            }
        );
        assert!(embed_address(&mut packets, &[0, 1], &[0u8; 16], &secret()).is_ok());
    }

    #[test]
    fn hoplimit_symbols_and_decode_ranges() {
        let mut packets = udp_carriers(3);
        embed_hoplimit(&mut packets, &[0, 1, 2], &[0, 1, 2], HopLimitMode::Ternary).unwrap();
        assert_eq!(
            packets.iter().map(|p| p.hop_limit).collect::<Vec<_>>(),
            vec![64, 128, 255]
        );

        // Simulated transit: each packet loses a few hops.
        packets[0].hop_limit -= 31;
        packets[1].hop_limit -= 17;
        packets[2].hop_limit -= 31;
        assert_eq!(
            extract_hoplimit(&packets, HopLimitMode::Ternary, DEFAULT_ASSUMED_MAX_HOPS),
            vec![Some(0), Some(1), Some(2)]
        );
    }

    #[test]
    fn hoplimit_decode_failures() {
        let mut packets = udp_carriers(4);
        packets[0].hop_limit = 32; // below 64 - 31
        packets[1].hop_limit = 97;
        packets[2].hop_limit = 192;
        packets[3].hop_limit = 255;
        assert_eq!(
            extract_hoplimit(&packets, HopLimitMode::Binary, DEFAULT_ASSUMED_MAX_HOPS),
            vec![None, Some(1), None, None]
        );
        assert_eq!(
            extract_hoplimit(&packets, HopLimitMode::Ternary, DEFAULT_ASSUMED_MAX_HOPS),
            vec![None, Some(1), Some(2), Some(2)]
        );
    }

    #[test]
    fn hoplimit_rejects_bad_symbols_and_short_carrier_lists() {
        let mut packets = udp_carriers(2);
        assert_eq!(
            embed_hoplimit(&mut packets, &[0, 1], &[0, 2], HopLimitMode::Binary).unwrap_err(),
            ChannelError::InvalidSymbol(2)
        );
        assert_eq!(
            embed_hoplimit(&mut packets, &[0], &[0, 1], HopLimitMode::Binary).unwrap_err(),
            ChannelError::Capacity {
                needed: 2,
                available: 1
            }
        );
    }

    #[test]
    fn bit_and_trit_packing_roundtrip() {
        let msg = b"\x00\x01\x7f\x80\xff covert";
        assert_eq!(bytes_from_bits(&bits_from_bytes(msg)), msg);
        assert_eq!(bytes_from_trits(&trits_from_bytes(msg)), msg);
        assert_eq!(bits_from_bytes(&[0xA5]), vec![1, 0, 1, 0, 0, 1, 0, 1]);
        assert_eq!(trits_from_bytes(&[5]), vec![0, 0, 0, 0, 1, 2]);
        // Trailing partial groups are dropped.
        assert_eq!(bytes_from_bits(&[1, 1, 1]), Vec::<u8>::new());
    }

    #[test]
    fn capacity_formulas() {
        use ChannelCapacity::*;
        let m = HopLimitMode::Binary;
        assert_eq!(channel_capacity(ChannelKind::FlowLabel, 15, m), Bytes(30));
        assert_eq!(channel_capacity(ChannelKind::Length, 10, m), Bytes(20));
        assert_eq!(channel_capacity(ChannelKind::Address, 4, m), Bytes(32));
        assert_eq!(channel_capacity(ChannelKind::HopLimit, 16, m), Bits(16));
        for (n, bits) in [(1u64, 1u64), (5, 7), (16, 25)] {
            assert_eq!(
                channel_capacity(ChannelKind::HopLimit, n, HopLimitMode::Ternary),
                Bits(bits)
            );
        }
    }

    #[test]
    fn channel_labels_roundtrip() {
        for kind in ALL_CHANNEL_KINDS {
            assert_eq!(kind.label().parse::<ChannelKind>().unwrap(), kind);
            assert_eq!(ChannelKind::from_index(kind.index()), Some(kind));
        }
        assert!("tcp".parse::<ChannelKind>().is_err());
    }

    #[test]
    fn bad_carrier_index_reported() {
        let mut packets = udp_carriers(2);
        assert_eq!(
            embed_length(&mut packets, &[5], b"ab", &secret()).unwrap_err(),
            ChannelError::BadCarrierIndex {
                index: 5,
                packet_count: 2
            }
        );
    }
}
