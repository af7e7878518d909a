//! Fixed IPv6 header parsing and serialization over classic-pcap records.
//!
//! A parsed packet keeps its link-layer prefix bytes and original capture
//! length, so packets that were not modified re-serialize byte-identically,
//! including snap-truncated ones. Extension headers are not walked; the
//! payload is everything after the fixed 40-byte header.

use thiserror::Error;

pub const IPV6_HEADER_LEN: usize = 40;

/// Pcap link types this crate understands.
pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW: u32 = 101;

pub const ETHERTYPE_IPV6: u16 = 0x86DD;
const ETHERNET_HEADER_LEN: usize = 14;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PacketError {
    #[error("record is not an IPv6 packet")]
    NotIpv6,
    #[error("record too short for {what}: {len} bytes")]
    Truncated { what: &'static str, len: usize },
    #[error("unsupported link type {0}")]
    UnsupportedLinkType(u32),
    #[error("flow label {0:#x} exceeds 20 bits")]
    FlowLabelRange(u32),
}

pub const FLOW_LABEL_MAX: u32 = 0xF_FFFF;

/// One captured IPv6 packet: the fixed-header fields, the captured payload
/// (possibly snap-truncated), the capture timestamp, and enough link-layer
/// context to reproduce the original record bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ipv6Packet {
    pub traffic_class: u8,
    /// 20-bit label; the upper 12 bits are always zero.
    pub flow_label: u32,
    /// Length field as written in the header, not necessarily `payload.len()`.
    pub payload_length_declared: u16,
    pub next_header: u8,
    pub hop_limit: u8,
    pub src_addr: [u8; 16],
    pub dst_addr: [u8; 16],
    pub payload: Vec<u8>,
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub link_type: u32,
    /// Raw bytes preceding the IPv6 header in the record (Ethernet header for
    /// link type 1, empty for raw IP).
    pub link_prefix: Vec<u8>,
    /// Untruncated packet length from the capture record.
    pub orig_len: u32,
}

impl Ipv6Packet {
    /// IP version as carried on the wire; parsing rejects anything else.
    pub fn version(&self) -> u8 {
        6
    }

    pub fn dscp(&self) -> u8 {
        self.traffic_class >> 2
    }

    pub fn ecn(&self) -> u8 {
        self.traffic_class & 0b11
    }

    /// Serialized record length (link prefix + header + captured payload).
    pub fn wire_len(&self) -> usize {
        self.link_prefix.len() + IPV6_HEADER_LEN + self.payload.len()
    }

    pub fn is_tcp(&self) -> bool {
        self.next_header == 6
    }

    pub fn is_udp(&self) -> bool {
        self.next_header == 17
    }

    pub fn is_icmpv6(&self) -> bool {
        self.next_header == 58
    }

    /// ICMPv6 error messages have type < 128.
    pub fn is_icmpv6_error(&self) -> bool {
        self.is_icmpv6() && self.payload.first().is_some_and(|&t| t < 128)
    }

    pub fn header_bytes(&self) -> [u8; IPV6_HEADER_LEN] {
        let mut h = [0u8; IPV6_HEADER_LEN];
        h[0] = (6 << 4) | (self.traffic_class >> 4);
        h[1] = (self.traffic_class << 4) | ((self.flow_label >> 16) as u8 & 0x0F);
        h[2] = (self.flow_label >> 8) as u8;
        h[3] = self.flow_label as u8;
        h[4..6].copy_from_slice(&self.payload_length_declared.to_be_bytes());
        h[6] = self.next_header;
        h[7] = self.hop_limit;
        h[8..24].copy_from_slice(&self.src_addr);
        h[24..40].copy_from_slice(&self.dst_addr);
        h
    }

    /// Record bytes as they appear in a capture: link prefix, fixed header,
    /// captured payload. Inverse of [`parse_ipv6`].
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&self.link_prefix);
        out.extend_from_slice(&self.header_bytes());
        out.extend_from_slice(&self.payload);
        out
    }
}

/// Offset of the IPv6 header within a record of the given link type, after
/// checking the link-layer framing actually carries IPv6.
fn ipv6_offset(bytes: &[u8], link_type: u32) -> Result<usize, PacketError> {
    match link_type {
        LINKTYPE_ETHERNET => {
            if bytes.len() < ETHERNET_HEADER_LEN {
                return Err(PacketError::Truncated {
                    what: "ethernet header",
                    len: bytes.len(),
                });
            }
            let ethertype = u16::from_be_bytes([bytes[12], bytes[13]]);
            if ethertype != ETHERTYPE_IPV6 {
                return Err(PacketError::NotIpv6);
            }
            Ok(ETHERNET_HEADER_LEN)
        }
        LINKTYPE_RAW => Ok(0),
        other => Err(PacketError::UnsupportedLinkType(other)),
    }
}

/// Parse one capture record into an [`Ipv6Packet`].
///
/// The declared payload length is kept as written even when the captured
/// payload is shorter (snap truncation) or longer; `serialize` reproduces the
/// record bytes exactly either way.
pub fn parse_ipv6(
    bytes: &[u8],
    link_type: u32,
    ts_sec: u32,
    ts_usec: u32,
    orig_len: u32,
) -> Result<Ipv6Packet, PacketError> {
    let offset = ipv6_offset(bytes, link_type)?;
    let ip = &bytes[offset..];
    if ip.len() < IPV6_HEADER_LEN {
        return Err(PacketError::Truncated {
            what: "ipv6 header",
            len: ip.len(),
        });
    }
    if ip[0] >> 4 != 6 {
        return Err(PacketError::NotIpv6);
    }
    let traffic_class = (ip[0] << 4) | (ip[1] >> 4);
    let flow_label = ((ip[1] as u32 & 0x0F) << 16) | ((ip[2] as u32) << 8) | ip[3] as u32;
    let mut src_addr = [0u8; 16];
    let mut dst_addr = [0u8; 16];
    src_addr.copy_from_slice(&ip[8..24]);
    dst_addr.copy_from_slice(&ip[24..40]);
    Ok(Ipv6Packet {
        traffic_class,
        flow_label,
        payload_length_declared: u16::from_be_bytes([ip[4], ip[5]]),
        next_header: ip[6],
        hop_limit: ip[7],
        src_addr,
        dst_addr,
        payload: ip[IPV6_HEADER_LEN..].to_vec(),
        ts_sec,
        ts_usec,
        link_type,
        link_prefix: bytes[..offset].to_vec(),
        orig_len,
    })
}

/// Locally administered MAC derived from an IPv6 address; keeps generated
/// Ethernet frames deterministic without tracking a side table.
pub fn mac_for_addr(addr: &[u8; 16]) -> [u8; 6] {
    [0x02, addr[10], addr[11], addr[13], addr[14], addr[15]]
}

/// Ethernet header for a generated IPv6 frame.
pub fn ethernet_prefix(src_addr: &[u8; 16], dst_addr: &[u8; 16]) -> Vec<u8> {
    let mut p = Vec::with_capacity(ETHERNET_HEADER_LEN);
    p.extend_from_slice(&mac_for_addr(dst_addr));
    p.extend_from_slice(&mac_for_addr(src_addr));
    p.extend_from_slice(&ETHERTYPE_IPV6.to_be_bytes());
    p
}
