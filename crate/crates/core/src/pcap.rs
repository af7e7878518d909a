//! Classic pcap container I/O (the 0xA1B2C3D4 microsecond format, both byte
//! orders). Nanosecond-format and pcapng files are rejected up front.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::packet::{parse_ipv6, Ipv6Packet, PacketError, LINKTYPE_ETHERNET, LINKTYPE_RAW};

pub const MAGIC_USEC: u32 = 0xA1B2_C3D4;
pub const MAGIC_USEC_SWAPPED: u32 = 0xD4C3_B2A1;
const MAGIC_NSEC: u32 = 0xA1B2_3C4D;
const MAGIC_NSEC_SWAPPED: u32 = 0x4D3C_B2A1;
const MAGIC_PCAPNG: u32 = 0x0A0D_0D0A;

const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
pub const DEFAULT_SNAPLEN: u32 = 65535;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a classic pcap file: magic {magic:#010x}{hint}")]
    BadMagic { magic: u32, hint: &'static str },
    #[error("unsupported pcap version {0}.{1}, expected 2.4")]
    BadVersion(u16, u16),
    #[error("file truncated inside the global header")]
    TruncatedGlobalHeader,
    #[error("record {index}: header truncated")]
    TruncatedRecordHeader { index: usize },
    #[error("record {index}: data truncated ({expected} bytes declared, {got} available)")]
    TruncatedRecord {
        index: usize,
        expected: u32,
        got: usize,
    },
    #[error("record {index}: {source}")]
    Packet { index: usize, source: PacketError },
    #[error("unsupported link type {0}, expected ethernet (1) or raw IP (101)")]
    UnsupportedLinkType(u32),
}

fn io_err(path: &Path, source: std::io::Error) -> PcapError {
    PcapError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Result of reading a capture: the IPv6 packets in record order plus the
/// count of well-formed records that were skipped for not being IPv6.
#[derive(Debug)]
pub struct CaptureRead {
    pub packets: Vec<Ipv6Packet>,
    pub link_type: u32,
    pub skipped_non_ipv6: usize,
}

#[derive(Clone, Copy)]
struct ByteOrder {
    swapped: bool,
}

impl ByteOrder {
    fn u32(&self, b: &[u8]) -> u32 {
        let raw = [b[0], b[1], b[2], b[3]];
        if self.swapped {
            u32::from_le_bytes(raw)
        } else {
            u32::from_be_bytes(raw)
        }
    }

    fn u16(&self, b: &[u8]) -> u16 {
        let raw = [b[0], b[1]];
        if self.swapped {
            u16::from_le_bytes(raw)
        } else {
            u16::from_be_bytes(raw)
        }
    }
}

/// Read a classic pcap file, returning its IPv6 packets in record order.
/// Records that parse but are not IPv6 (wrong ethertype or version nibble,
/// or too short for the fixed header) are counted, not returned.
pub fn read_pcap(path: impl AsRef<Path>) -> Result<CaptureRead, PcapError> {
    let path = path.as_ref();
    let mut file = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut data = Vec::new();
    file.read_to_end(&mut data).map_err(|e| io_err(path, e))?;
    read_pcap_bytes(&data)
}

/// Same as [`read_pcap`] but over an in-memory buffer.
pub fn read_pcap_bytes(data: &[u8]) -> Result<CaptureRead, PcapError> {
    if data.len() < GLOBAL_HEADER_LEN {
        if data.len() >= 4 {
            // Classify the magic before complaining about length.
            check_magic(u32::from_be_bytes([data[0], data[1], data[2], data[3]]))?;
        }
        return Err(PcapError::TruncatedGlobalHeader);
    }
    let magic_be = u32::from_be_bytes([data[0], data[1], data[2], data[3]]);
    let order = check_magic(magic_be)?;

    let version_major = order.u16(&data[4..6]);
    let version_minor = order.u16(&data[6..8]);
    if version_major != 2 || version_minor != 4 {
        return Err(PcapError::BadVersion(version_major, version_minor));
    }
    let link_type = order.u32(&data[20..24]);
    if link_type != LINKTYPE_ETHERNET && link_type != LINKTYPE_RAW {
        return Err(PcapError::UnsupportedLinkType(link_type));
    }

    let mut packets = Vec::new();
    let mut skipped = 0usize;
    let mut pos = GLOBAL_HEADER_LEN;
    let mut index = 0usize;
    while pos < data.len() {
        if data.len() - pos < RECORD_HEADER_LEN {
            return Err(PcapError::TruncatedRecordHeader { index });
        }
        let ts_sec = order.u32(&data[pos..]);
        let ts_usec = order.u32(&data[pos + 4..]);
        let incl_len = order.u32(&data[pos + 8..]);
        let orig_len = order.u32(&data[pos + 12..]);
        pos += RECORD_HEADER_LEN;
        let got = data.len() - pos;
        if (incl_len as usize) > got {
            return Err(PcapError::TruncatedRecord {
                index,
                expected: incl_len,
                got,
            });
        }
        let rec = &data[pos..pos + incl_len as usize];
        pos += incl_len as usize;
        match parse_ipv6(rec, link_type, ts_sec, ts_usec, orig_len) {
            Ok(p) => packets.push(p),
            Err(PacketError::NotIpv6) | Err(PacketError::Truncated { .. }) => skipped += 1,
            Err(e) => return Err(PcapError::Packet { index, source: e }),
        }
        index += 1;
    }
    Ok(CaptureRead {
        packets,
        link_type,
        skipped_non_ipv6: skipped,
    })
}

fn check_magic(magic_be: u32) -> Result<ByteOrder, PcapError> {
    match magic_be {
        MAGIC_USEC => Ok(ByteOrder { swapped: false }),
        MAGIC_USEC_SWAPPED => Ok(ByteOrder { swapped: true }),
        MAGIC_NSEC | MAGIC_NSEC_SWAPPED => Err(PcapError::BadMagic {
            magic: magic_be,
            hint: " (nanosecond-resolution pcap is not supported)",
        }),
        MAGIC_PCAPNG => Err(PcapError::BadMagic {
            magic: magic_be,
            hint: " (pcapng is not supported)",
        }),
        other => Err(PcapError::BadMagic {
            magic: other,
            hint: "",
        }),
    }
}

/// Serialize packets into classic pcap bytes. Fields are written
/// little-endian (the common tcpdump layout); timestamps and original
/// lengths come from the packets themselves.
pub fn write_pcap_bytes(packets: &[Ipv6Packet], link_type: u32) -> Result<Vec<u8>, PcapError> {
    if link_type != LINKTYPE_ETHERNET && link_type != LINKTYPE_RAW {
        return Err(PcapError::UnsupportedLinkType(link_type));
    }
    let mut out = Vec::with_capacity(
        GLOBAL_HEADER_LEN + packets.iter().map(|p| RECORD_HEADER_LEN + p.wire_len()).sum::<usize>(),
    );
    out.extend_from_slice(&MAGIC_USEC.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes()); // thiszone
    out.extend_from_slice(&0u32.to_le_bytes()); // sigfigs
    out.extend_from_slice(&DEFAULT_SNAPLEN.to_le_bytes());
    out.extend_from_slice(&link_type.to_le_bytes());
    for p in packets {
        let bytes = p.serialize();
        out.extend_from_slice(&p.ts_sec.to_le_bytes());
        out.extend_from_slice(&p.ts_usec.to_le_bytes());
        out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&p.orig_len.to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    Ok(out)
}

/// Write packets to a classic pcap file; returns the number of records.
pub fn write_pcap(
    packets: &[Ipv6Packet],
    path: impl AsRef<Path>,
    link_type: u32,
) -> Result<usize, PcapError> {
    let path = path.as_ref();
    let bytes = write_pcap_bytes(packets, link_type)?;
    let mut file = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    file.write_all(&bytes).map_err(|e| io_err(path, e))?;
    file.flush().map_err(|e| io_err(path, e))?;
    Ok(packets.len())
}
