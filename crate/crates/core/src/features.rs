//! Per-packet feature extraction for the classifiers, plus CSV
//! serialization of the resulting matrix.
//!
//! Every feature is computable from a capture alone, without the shared
//! secret. Flow-context features (label diversity and modality, hop-limit
//! spread, sequence continuity, flow size) come from one pass over the
//! capture's flow table; they matter because a single covert packet often
//! looks plausible in isolation but not against its host flow.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::channels::ChannelKind;
use crate::flow::{flow_membership, tcp_segment};
use crate::packet::Ipv6Packet;
use crate::scalar::Scalar;

pub const FEATURE_COUNT: usize = 20;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "dscp",
    "ecn",
    "flow_label",
    "flow_label_is_zero",
    "flow_label_flow_distinct",
    "payload_length_declared",
    "payload_length_actual",
    "length_delta",
    "hop_limit",
    "hop_limit_flow_deviation",
    "nh_tcp",
    "nh_udp",
    "nh_icmpv6",
    "nh_other",
    "is_icmpv6_error",
    "src_iid_entropy",
    "tcp_seq_discontinuity",
    "hop_limit_flow_distinct",
    "flow_label_matches_flow_mode",
    "flow_packet_count",
];

/// Columns that are already 0/1 indicators; normalization leaves them alone.
pub const INDICATOR_COLUMNS: [usize; 8] = [3, 10, 11, 12, 13, 14, 16, 18];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// One row per packet, `FEATURE_COUNT` columns each, plus the class label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<F> {
    pub rows: Vec<Vec<F>>,
    pub labels: Vec<ChannelKind>,
}

impl<F: Scalar> FeatureMatrix<F> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Sequential head/tail split at `floor(len * fraction)`.
    pub fn split_sequential(&self, fraction: f64) -> (FeatureMatrix<F>, FeatureMatrix<F>) {
        let cut = (self.len() as f64 * fraction).floor() as usize;
        (
            FeatureMatrix {
                rows: self.rows[..cut].to_vec(),
                labels: self.labels[..cut].to_vec(),
            },
            FeatureMatrix {
                rows: self.rows[cut..].to_vec(),
                labels: self.labels[cut..].to_vec(),
            },
        )
    }
}

/// Shannon entropy of the byte multiset, in bits per byte, rounded to 1e-6
/// so the value survives a CSV round trip unchanged.
pub fn byte_entropy(bytes: &[u8]) -> f64 {
    if bytes.is_empty() {
        return 0.0;
    }
    let mut counts = [0usize; 256];
    for &b in bytes {
        counts[b as usize] += 1;
    }
    let n = bytes.len() as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    (h * 1e6).round() / 1e6
}

/// Extract the feature matrix for a capture. `labels` must be index aligned
/// with `packets`; pass `None` for an unlabeled capture (every row is then
/// labeled Normal).
pub fn extract_features<F: Scalar>(
    packets: &[Ipv6Packet],
    labels: Option<&[ChannelKind]>,
) -> FeatureMatrix<F> {
    if let Some(l) = labels {
        assert_eq!(l.len(), packets.len(), "labels must align with packets");
    }
    let (records, membership) = flow_membership(packets);

    // Walk each flow once, tracking where the TCP sequence should continue.
    let mut discontinuity = vec![false; packets.len()];
    for record in &records {
        if record.key.next_header != 6 {
            continue;
        }
        let mut expected: Option<u32> = None;
        for &i in &record.packet_indices {
            let Some(seg) = tcp_segment(&packets[i]) else {
                continue;
            };
            if let Some(e) = expected {
                discontinuity[i] = seg.seq != e;
            }
            expected = Some(seg.seq.wrapping_add(seg.data_len as u32));
        }
    }

    let one = F::one();
    let zero = F::zero();
    let indicator = |b: bool| if b { one } else { zero };
    let rows = packets
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let record = &records[membership[i]];
            let declared = p.payload_length_declared as i64;
            let actual = p.payload.len() as i64;
            vec![
                F::from_usize_lossy(p.dscp() as usize),
                F::from_usize_lossy(p.ecn() as usize),
                F::from_usize_lossy(p.flow_label as usize),
                indicator(p.flow_label == 0),
                F::from_usize_lossy(record.distinct_flow_labels.len()),
                F::from_usize_lossy(declared as usize),
                F::from_usize_lossy(actual as usize),
                F::from_f64_lossy((declared - actual) as f64),
                F::from_usize_lossy(p.hop_limit as usize),
                F::from_usize_lossy((p.hop_limit as i16 - record.hop_limit_mode as i16).unsigned_abs() as usize),
                indicator(p.is_tcp()),
                indicator(p.is_udp()),
                indicator(p.is_icmpv6()),
                indicator(!(p.is_tcp() || p.is_udp() || p.is_icmpv6())),
                indicator(p.is_icmpv6_error()),
                F::from_f64_lossy(byte_entropy(&p.src_addr[8..16])),
                indicator(discontinuity[i]),
                F::from_usize_lossy(record.distinct_hop_limits()),
                indicator(p.flow_label == record.flow_label_mode),
                F::from_usize_lossy(record.packet_indices.len()),
            ]
        })
        .collect();
    FeatureMatrix {
        rows,
        labels: match labels {
            Some(l) => l.to_vec(),
            None => vec![ChannelKind::Normal; packets.len()],
        },
    }
}

// ---- normalization ----

/// Min/max scaling fitted on training rows. Indicator columns pass through;
/// a column that was constant in training maps to zero; everything else is
/// scaled into [0, 1] on the training range and clamped to [-1, 2] so that
/// unseen out-of-range values stay bounded.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalizationParams<F> {
    pub mins: Vec<F>,
    pub maxs: Vec<F>,
    pub passthrough: Vec<bool>,
}

impl<F: Scalar> NormalizationParams<F> {
    pub fn fit(matrix: &FeatureMatrix<F>) -> Self {
        assert!(!matrix.is_empty(), "cannot fit normalization on no rows");
        let d = matrix.rows[0].len();
        let mut mins = matrix.rows[0].clone();
        let mut maxs = matrix.rows[0].clone();
        for row in &matrix.rows {
            for j in 0..d {
                if row[j] < mins[j] {
                    mins[j] = row[j];
                }
                if row[j] > maxs[j] {
                    maxs[j] = row[j];
                }
            }
        }
        let mut passthrough = vec![false; d];
        for &j in &INDICATOR_COLUMNS {
            if j < d {
                passthrough[j] = true;
            }
        }
        NormalizationParams {
            mins,
            maxs,
            passthrough,
        }
    }

    pub fn apply_row(&self, row: &mut [F]) {
        let low = F::from_f64_lossy(-1.0);
        let high = F::from_f64_lossy(2.0);
        for (j, x) in row.iter_mut().enumerate() {
            if self.passthrough[j] {
                continue;
            }
            let range = self.maxs[j] - self.mins[j];
            *x = if range == F::zero() {
                F::zero()
            } else {
                ((*x - self.mins[j]) / range).max(low).min(high)
            };
        }
    }

    pub fn apply(&self, matrix: &mut FeatureMatrix<F>) {
        for row in &mut matrix.rows {
            self.apply_row(row);
        }
    }
}

// ---- CSV ----

/// Format a feature value with at most six fractional digits, trailing
/// zeros trimmed, so integers print bare and entropies print exactly.
fn format_value<F: Scalar>(x: F) -> String {
    let v = x.to_f64_lossy();
    if v == v.trunc() && v.abs() < 1e15 {
        return format!("{}", v as i64);
    }
    let mut s = format!("{v:.6}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

pub fn write_features_csv<F: Scalar>(
    matrix: &FeatureMatrix<F>,
    path: impl AsRef<Path>,
) -> Result<(), FeatureError> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&FEATURE_NAMES.join(","));
    out.push_str(",label\n");
    for (row, label) in matrix.rows.iter().zip(&matrix.labels) {
        for (j, &x) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_value(x));
        }
        let _ = writeln!(out, ",{label}");
    }
    fs::write(path, out).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_features_csv<F: Scalar>(path: impl AsRef<Path>) -> Result<FeatureMatrix<F>, FeatureError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_features_csv(&text)
}

pub fn parse_features_csv<F: Scalar>(text: &str) -> Result<FeatureMatrix<F>, FeatureError> {
    let malformed = |line: usize, message: String| FeatureError::Malformed { line, message };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(1, "empty file".into()))?;
    let expected_header = format!("{},label", FEATURE_NAMES.join(","));
    if header != expected_header {
        return Err(malformed(1, format!("unexpected header {header:?}")));
    }
    let mut matrix = FeatureMatrix {
        rows: Vec::new(),
        labels: Vec::new(),
    };
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != FEATURE_COUNT + 1 {
            return Err(malformed(
                i + 1,
                format!("expected {} fields, got {}", FEATURE_COUNT + 1, fields.len()),
            ));
        }
        let mut row = Vec::with_capacity(FEATURE_COUNT);
        for (j, field) in fields[..FEATURE_COUNT].iter().enumerate() {
            let v: f64 = field.parse().map_err(|e| {
                malformed(i + 1, format!("column {}: bad number {field:?}: {e}", FEATURE_NAMES[j]))
            })?;
            row.push(F::from_f64_lossy(v));
        }
        let label: ChannelKind = fields[FEATURE_COUNT]
            .parse()
            .map_err(|e| malformed(i + 1, format!("label column: {e}")))?;
        matrix.rows.push(row);
        matrix.labels.push(label);
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::HOPLIMIT_SYMBOL_VALUES;
    use crate::crypto::{SharedSecret, EXAMPLE_SEQUENCE};
    use crate::dataset::{generate_background, inject, InjectOptions, MixConfig};

    fn secret() -> SharedSecret {
        SharedSecret::new(b"Key".to_vec(), EXAMPLE_SEQUENCE, 13).unwrap()
    }

    fn background(n: usize) -> crate::dataset::LabeledCapture {
        generate_background(&MixConfig {
            normal_count: n,
            seed: 42,
            ..MixConfig::default()
        })
    }

    #[test]
    fn entropy_matches_hand_computed_values() {
        assert_eq!(byte_entropy(&[1, 2, 3, 4, 5, 6, 7, 8]), 3.0);
        assert_eq!(byte_entropy(&[9; 8]), 0.0);
        assert_eq!(byte_entropy(&[1, 1, 2, 2, 3, 3, 4, 4]), 2.0);
        assert_eq!(byte_entropy(&[]), 0.0);
        // 5+3 split of 8: -(5/8)log2(5/8) - (3/8)log2(3/8), rounded 1e-6.
        assert_eq!(byte_entropy(&[7, 7, 7, 7, 7, 1, 1, 1]), 0.954434);
    }

    #[test]
    fn background_rows_have_clean_invariants() {
        let capture = background(300);
        let m: FeatureMatrix<f64> = extract_features(&capture.packets, Some(&capture.labels));
        assert_eq!(m.len(), capture.len());
        for row in &m.rows {
            assert_eq!(row.len(), FEATURE_COUNT);
            assert_eq!(row[7], 0.0, "declared matches actual");
            assert_eq!(row[16], 0.0, "no sequence discontinuity");
            // Exactly one next-header indicator set.
            assert_eq!(row[10] + row[11] + row[12] + row[13], 1.0);
            assert!(row[19] >= 1.0, "flow contains its own packet");
            // TCP and UDP flows keep one hop limit and one label per
            // direction; ICMPv6 flows can alias (no ports in the key).
            if row[10] == 1.0 || row[11] == 1.0 {
                assert_eq!(row[17], 1.0, "single hop limit per flow");
                assert_eq!(row[18], 1.0, "label matches flow mode");
            }
        }
    }

    #[test]
    fn covert_rows_expose_their_channel() {
        let mut capture = background(500);
        for (channel, msg) in [
            (ChannelKind::Length, &b"some length payload"[..]),
            (ChannelKind::Address, &b"address bytes here!!"[..]),
            (ChannelKind::FlowLabel, &b"label data"[..]),
            (ChannelKind::HopLimit, &b"hop"[..]),
        ] {
            inject(&mut capture, channel, msg, &secret(), &InjectOptions::default()).unwrap();
        }
        let m: FeatureMatrix<f64> = extract_features(&capture.packets, Some(&capture.labels));
        for (row, &label) in m.rows.iter().zip(&m.labels) {
            match label {
                ChannelKind::Length => assert_ne!(row[7], 0.0, "length delta"),
                ChannelKind::HopLimit => {
                    assert!(
                        HOPLIMIT_SYMBOL_VALUES.contains(&(row[8] as u8)),
                        "hop limit symbol"
                    );
                    assert!(row[17] >= 2.0, "modulated flow mixes hop limits");
                }
                ChannelKind::FlowLabel => {
                    assert!(row[4] > 1.0, "flow label diversity");
                    assert_eq!(row[18], 0.0, "one-off label differs from flow mode");
                }
                ChannelKind::Address => {
                    assert!(row[15] > 2.0, "ciphertext iid entropy");
                    assert_eq!(row[19], 1.0, "standalone carrier flow");
                }
                ChannelKind::Normal => {}
            }
        }
    }

    #[test]
    fn discontinuity_only_fires_on_real_gaps() {
        let capture = background(400);
        let m: FeatureMatrix<f64> = extract_features(&capture.packets, None);
        assert!(m.rows.iter().all(|r| r[16] == 0.0));
        // Remove one mid-flow TCP data packet: the next same-flow packet
        // must flag a gap.
        let (records, _) = flow_membership(&capture.packets);
        let victim = records
            .iter()
            .filter(|r| r.key.next_header == 6)
            .flat_map(|r| {
                // Any data packet that is not the flow's last packet.
                r.packet_indices[..r.packet_indices.len().saturating_sub(1)].to_vec()
            })
            .find(|&i| tcp_segment(&capture.packets[i]).is_some_and(|s| s.data_len > 0))
            .expect("mid-flow tcp data packet");
        let mut packets = capture.packets.clone();
        packets.remove(victim);
        let m: FeatureMatrix<f64> = extract_features(&packets, None);
        assert!(m.rows.iter().any(|r| r[16] == 1.0));
    }

    #[test]
    fn normalization_scales_train_and_clamps_test() {
        let mut train = FeatureMatrix::<f64> {
            rows: vec![],
            labels: vec![],
        };
        // Column layout only matters for the passthrough mask; build rows
        // with distinct values in a scaled column (0) and an indicator (3).
        for v in [10.0, 20.0, 30.0] {
            let mut row = vec![0.0; FEATURE_COUNT];
            row[0] = v;
            row[3] = 1.0;
            row[5] = 7.0; // constant column
            train.rows.push(row);
            train.labels.push(ChannelKind::Normal);
        }
        let params = NormalizationParams::fit(&train);
        let mut m = train.clone();
        params.apply(&mut m);
        assert_eq!(m.rows[0][0], 0.0);
        assert_eq!(m.rows[1][0], 0.5);
        assert_eq!(m.rows[2][0], 1.0);
        assert_eq!(m.rows[0][3], 1.0, "indicator untouched");
        assert_eq!(m.rows[0][5], 0.0, "constant column collapses to zero");

        let mut out_of_range = vec![0.0; FEATURE_COUNT];
        out_of_range[0] = 1000.0;
        params.apply_row(&mut out_of_range);
        assert_eq!(out_of_range[0], 2.0, "clamped above");
        let mut below = vec![0.0; FEATURE_COUNT];
        below[0] = -1000.0;
        params.apply_row(&mut below);
        assert_eq!(below[0], -1.0, "clamped below");
    }

    #[test]
    fn csv_roundtrip_is_identity() {
        let mut capture = background(200);
        inject(
            &mut capture,
            ChannelKind::Address,
            b"roundtrip bytes",
            &secret(),
            &InjectOptions::default(),
        )
        .unwrap();
        let m: FeatureMatrix<f64> = extract_features(&capture.packets, Some(&capture.labels));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        write_features_csv(&m, &path).unwrap();
        let back: FeatureMatrix<f64> = read_features_csv(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let header = format!("{},label\n", FEATURE_NAMES.join(","));
        let good_row = format!("{},normal\n", vec!["0"; FEATURE_COUNT].join(","));

        let short = format!("{header}{good_row}1,2,3,normal\n");
        let err = parse_features_csv::<f64>(&short).unwrap_err();
        assert!(matches!(err, FeatureError::Malformed { line: 3, .. }), "{err}");

        let bad_num = format!("{header}{},normal\n", vec!["x"; FEATURE_COUNT].join(","));
        let err = parse_features_csv::<f64>(&bad_num).unwrap_err();
        assert!(matches!(err, FeatureError::Malformed { line: 2, .. }), "{err}");

        let bad_label = format!("{header}{},mystery\n", vec!["0"; FEATURE_COUNT].join(","));
        let err = parse_features_csv::<f64>(&bad_label).unwrap_err();
        assert!(matches!(err, FeatureError::Malformed { line: 2, .. }), "{err}");

        let err = parse_features_csv::<f64>("dscp,label\n").unwrap_err();
        assert!(matches!(err, FeatureError::Malformed { line: 1, .. }), "{err}");
    }

    #[test]
    fn format_trims_trailing_zeros() {
        assert_eq!(format_value(3.0f64), "3");
        assert_eq!(format_value(0.954434f64), "0.954434");
        assert_eq!(format_value(-12.0f64), "-12");
        assert_eq!(format_value(2.5f64), "2.5");
        assert_eq!(format_value(0.0f64), "0");
    }
}
