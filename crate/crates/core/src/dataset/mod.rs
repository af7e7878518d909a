//! Labeled synthetic captures: background traffic generation, covert-channel
//! injection, dataset mixing, and the label sidecar format.

mod background;
mod inject;

pub use background::generate_background;
pub use inject::{build_mixed_dataset, inject, InjectOptions, InjectSummary};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::channels::{ChannelError, ChannelKind};
use crate::packet::Ipv6Packet;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("no eligible flow for the {channel} channel in this capture")]
    NoEligibleFlow { channel: ChannelKind },
    #[error("capture exhausted while placing {channel} packets: {needed} more needed")]
    InsufficientBackground { channel: ChannelKind, needed: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("labels file {path}: {message}")]
    Labels { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

// ---- mix configuration ----

/// How a mixed dataset is composed: the number of untouched background
/// packets, per-channel covert packet counts, and the seed every randomized
/// stage derives from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixConfig {
    pub normal_count: usize,
    pub covert_counts: BTreeMap<ChannelKind, usize>,
    pub seed: u64,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            normal_count: 0,
            covert_counts: BTreeMap::new(),
            seed: 42,
        }
    }
}

/// Desk-scale counts: the published dataset's class sizes divided by 100.
pub fn desk_scale_config(seed: u64) -> MixConfig {
    let mut config = MixConfig {
        normal_count: 4117,
        seed,
        ..MixConfig::default()
    };
    config.covert_counts.insert(ChannelKind::HopLimit, 1166);
    config.covert_counts.insert(ChannelKind::Address, 766);
    config.covert_counts.insert(ChannelKind::Length, 758);
    config.covert_counts.insert(ChannelKind::FlowLabel, 447);
    config
}

impl MixConfig {
    pub fn covert_count(&self, channel: ChannelKind) -> usize {
        self.covert_counts.get(&channel).copied().unwrap_or(0)
    }

    pub fn total_packets(&self) -> usize {
        self.normal_count + self.covert_counts.values().sum::<usize>()
    }

    /// Parse the `key=value` config format: keys `normal`, `seed`, and the
    /// channel labels; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut config = MixConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| DatasetError::Config {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "seed" => {
                    config.seed = value
                        .parse()
                        .map_err(|e| err(format!("bad seed {value:?}: {e}")))?;
                }
                "normal" => {
                    config.normal_count = value
                        .parse()
                        .map_err(|e| err(format!("bad count {value:?}: {e}")))?;
                }
                other => match other.parse::<ChannelKind>() {
                    Ok(ChannelKind::Normal) | Err(_) => {
                        return Err(err(format!("unknown key {other:?}")));
                    }
                    Ok(kind) => {
                        let count = value
                            .parse()
                            .map_err(|e| err(format!("bad count {value:?}: {e}")))?;
                        config.covert_counts.insert(kind, count);
                    }
                },
            }
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

// ---- labels ----

/// How a packet came to be in the capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Generated as background traffic and never touched.
    Background,
    /// Newly created to carry covert data.
    Inserted,
    /// Existing background packet whose header field was overwritten.
    Modulated,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Provenance::Background => "background",
            Provenance::Inserted => "inserted",
            Provenance::Modulated => "modulated",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "background" => Ok(Provenance::Background),
            "inserted" => Ok(Provenance::Inserted),
            "modulated" => Ok(Provenance::Modulated),
            other => Err(format!("unknown provenance {other:?}")),
        }
    }
}

/// A capture with one label and one provenance entry per packet, index
/// aligned with `packets`.
#[derive(Debug, Clone, Default)]
pub struct LabeledCapture {
    pub packets: Vec<Ipv6Packet>,
    pub labels: Vec<ChannelKind>,
    pub provenance: Vec<Provenance>,
}

impl LabeledCapture {
    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn push(&mut self, packet: Ipv6Packet, label: ChannelKind, provenance: Provenance) {
        self.packets.push(packet);
        self.labels.push(label);
        self.provenance.push(provenance);
    }

    pub fn insert(
        &mut self,
        index: usize,
        packet: Ipv6Packet,
        label: ChannelKind,
        provenance: Provenance,
    ) {
        self.packets.insert(index, packet);
        self.labels.insert(index, label);
        self.provenance.insert(index, provenance);
    }

    pub fn label_histogram(&self) -> BTreeMap<ChannelKind, usize> {
        let mut hist = BTreeMap::new();
        for &label in &self.labels {
            *hist.entry(label).or_insert(0) += 1;
        }
        hist
    }

    /// First `floor(len * train_fraction)` packets and the rest, in capture
    /// order; nothing is shuffled.
    pub fn split_sequential(&self, train_fraction: f64) -> (LabeledCapture, LabeledCapture) {
        let cut = ((self.len() as f64) * train_fraction).floor() as usize;
        let cut = cut.min(self.len());
        let take = |range: std::ops::Range<usize>| LabeledCapture {
            packets: self.packets[range.clone()].to_vec(),
            labels: self.labels[range.clone()].to_vec(),
            provenance: self.provenance[range].to_vec(),
        };
        (take(0..cut), take(cut..self.len()))
    }

    /// Write the label sidecar: `packet_index,label,provenance`, one row per
    /// packet in capture order.
    pub fn write_labels_csv(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let mut out = String::from("packet_index,label,provenance\n");
        for (i, (label, prov)) in self.labels.iter().zip(&self.provenance).enumerate() {
            out.push_str(&format!("{i},{label},{prov}\n"));
        }
        fs::write(path, out).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Read a label sidecar back into aligned label/provenance vectors.
pub fn read_labels_csv(
    path: impl AsRef<Path>,
) -> Result<(Vec<ChannelKind>, Vec<Provenance>), DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let err = |message: String| DatasetError::Labels {
        path: path.display().to_string(),
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "packet_index,label,provenance")) => {}
        other => {
            return Err(err(format!(
                "bad header line: {:?}",
                other.map(|(_, l)| l).unwrap_or("<empty file>")
            )))
        }
    }
    let mut labels = Vec::new();
    let mut provenance = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(index), Some(label), Some(prov), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(err(format!("line {}: expected 3 fields", i + 1)));
        };
        let index: usize = index
            .parse()
            .map_err(|e| err(format!("line {}: bad packet index: {e}", i + 1)))?;
        if index != labels.len() {
            return Err(err(format!(
                "line {}: packet index {index} out of order (expected {})",
                i + 1,
                labels.len()
            )));
        }
        labels.push(
            label
                .parse::<ChannelKind>()
                .map_err(|e| err(format!("line {}: {e}", i + 1)))?,
        );
        provenance.push(
            prov.parse::<Provenance>()
                .map_err(|e| err(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok((labels, provenance))
}
