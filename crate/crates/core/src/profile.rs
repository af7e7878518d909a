//! Capture profiling: header-field histograms and per-protocol flow-label
//! behavior, written out as CSV tables plus a text summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::flow::FlowRecord;
use crate::packet::Ipv6Packet;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Packet populations whose flow-label habits differ enough to report
/// separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolClass {
    Tcp,
    Udp,
    IcmpEcho,
    IcmpError,
    Other,
}

pub const PROTOCOL_CLASSES: [ProtocolClass; 5] = [
    ProtocolClass::Tcp,
    ProtocolClass::Udp,
    ProtocolClass::IcmpEcho,
    ProtocolClass::IcmpError,
    ProtocolClass::Other,
];

impl ProtocolClass {
    pub fn of(packet: &Ipv6Packet) -> Self {
        if packet.is_tcp() {
            ProtocolClass::Tcp
        } else if packet.is_udp() {
            ProtocolClass::Udp
        } else if packet.is_icmpv6_error() {
            ProtocolClass::IcmpError
        } else if packet.is_icmpv6() {
            ProtocolClass::IcmpEcho
        } else {
            ProtocolClass::Other
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ProtocolClass::Tcp => "tcp",
            ProtocolClass::Udp => "udp",
            ProtocolClass::IcmpEcho => "icmpv6-echo",
            ProtocolClass::IcmpError => "icmpv6-error",
            ProtocolClass::Other => "other",
        }
    }

    fn index(self) -> usize {
        PROTOCOL_CLASSES.iter().position(|&c| c == self).unwrap()
    }
}

/// Flow-label behavior of one protocol class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowLabelStats {
    pub packets: usize,
    pub flows: usize,
    /// Fraction of the class's packets carrying label 0.
    pub fraction_zero: f64,
    /// Fraction of the class's flows using a single label throughout.
    pub fraction_constant_per_flow: f64,
    /// Shannon entropy, in bits, of the label value distribution over the
    /// class's packets.
    pub distinct_value_entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileReport {
    pub packet_count: usize,
    pub hop_limit_histogram: Vec<usize>,
    pub dscp_histogram: Vec<usize>,
    pub ecn_histogram: Vec<usize>,
    /// Indexed like [`PROTOCOL_CLASSES`].
    pub flowlabel_stats: Vec<FlowLabelStats>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn label_entropy(counts: &std::collections::BTreeMap<u32, usize>, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Profile a capture. `records` is the capture's flow table, as produced by
/// [`crate::flow::flow_membership`]; a flow is classed by its first packet.
pub fn profile_capture(packets: &[Ipv6Packet], records: &[FlowRecord]) -> ProfileReport {
    let mut hop = vec![0usize; 256];
    let mut dscp = vec![0usize; 64];
    let mut ecn = vec![0usize; 4];
    let mut zero = [0usize; 5];
    let mut pkts = [0usize; 5];
    let mut label_counts: [std::collections::BTreeMap<u32, usize>; 5] = Default::default();
    for p in packets {
        hop[p.hop_limit as usize] += 1;
        dscp[p.dscp() as usize] += 1;
        ecn[p.ecn() as usize] += 1;
        let c = ProtocolClass::of(p).index();
        pkts[c] += 1;
        zero[c] += (p.flow_label == 0) as usize;
        *label_counts[c].entry(p.flow_label).or_insert(0) += 1;
    }
    let mut flows = [0usize; 5];
    let mut constant = [0usize; 5];
    for record in records {
        let first = record.packet_indices[0];
        let c = ProtocolClass::of(&packets[first]).index();
        flows[c] += 1;
        constant[c] += (record.distinct_flow_labels.len() == 1) as usize;
    }
    let flowlabel_stats = (0..PROTOCOL_CLASSES.len())
        .map(|c| FlowLabelStats {
            packets: pkts[c],
            flows: flows[c],
            fraction_zero: ratio(zero[c], pkts[c]),
            fraction_constant_per_flow: ratio(constant[c], flows[c]),
            distinct_value_entropy: label_entropy(&label_counts[c], pkts[c]),
        })
        .collect();
    ProfileReport {
        packet_count: packets.len(),
        hop_limit_histogram: hop,
        dscp_histogram: dscp,
        ecn_histogram: ecn,
        flowlabel_stats,
    }
}

fn histogram_csv(name: &str, counts: &[usize]) -> String {
    let mut out = format!("{name},count\n");
    for (v, &c) in counts.iter().enumerate() {
        let _ = writeln!(out, "{v},{c}");
    }
    out
}

impl ProfileReport {
    pub fn flowlabel_csv(&self) -> String {
        let mut out = String::from(
            "class,packets,flows,fraction_zero,fraction_constant_per_flow,distinct_value_entropy\n",
        );
        for (class, s) in PROTOCOL_CLASSES.iter().zip(&self.flowlabel_stats) {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6}",
                class.label(),
                s.packets,
                s.flows,
                s.fraction_zero,
                s.fraction_constant_per_flow,
                s.distinct_value_entropy
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "packets: {}", self.packet_count);
        let mut top: Vec<(usize, usize)> = self
            .hop_limit_histogram
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, c)| c > 0)
            .collect();
        top.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let _ = writeln!(out, "distinct hop limit values: {}", top.len());
        for &(v, c) in top.iter().take(8) {
            let _ = writeln!(
                out,
                "  hop limit {v:>3}: {c} ({:.1}%)",
                100.0 * ratio(c, self.packet_count)
            );
        }
        let _ = writeln!(
            out,
            "dscp zero fraction: {:.4}",
            ratio(self.dscp_histogram[0], self.packet_count)
        );
        let _ = writeln!(
            out,
            "ecn zero fraction: {:.4}",
            ratio(self.ecn_histogram[0], self.packet_count)
        );
        let _ = writeln!(out, "flow label behavior by protocol:");
        for (class, s) in PROTOCOL_CLASSES.iter().zip(&self.flowlabel_stats) {
            if s.packets == 0 {
                continue;
            }
            let _ = writeln!(
                out,
                "  {:<12} {:>6} packets {:>5} flows, zero {:.3}, constant/flow {:.3}, entropy {:.2} bits",
                class.label(),
                s.packets,
                s.flows,
                s.fraction_zero,
                s.fraction_constant_per_flow,
                s.distinct_value_entropy
            );
        }
        out
    }

    /// Write the report under `dir` as three histogram CSVs, a flow-label
    /// stats CSV, and `summary.txt`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<(), ProfileError> {
        let dir = dir.as_ref();
        let write = |name: &str, content: String| -> Result<(), ProfileError> {
            let path = dir.join(name);
            fs::write(&path, content).map_err(|source| ProfileError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        fs::create_dir_all(dir).map_err(|source| ProfileError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write(
            "hop_limit_histogram.csv",
            histogram_csv("hop_limit", &self.hop_limit_histogram),
        )?;
        write("dscp_histogram.csv", histogram_csv("dscp", &self.dscp_histogram))?;
        write("ecn_histogram.csv", histogram_csv("ecn", &self.ecn_histogram))?;
        write("flowlabel_stats.csv", self.flowlabel_csv())?;
        write("summary.txt", self.summary())
    }
}
