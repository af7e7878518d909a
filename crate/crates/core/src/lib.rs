//! Covert channels in the fixed IPv6 header, end to end: embedding and
//! extraction codecs for the HopLimit, Address, Length, and FlowLabel
//! channels, a deterministic synthetic-traffic generator with channel
//! injection, per-packet feature extraction, and from-scratch tree ensembles
//! (random forest, gradient boosting) with a two-stage detection pipeline.
//!
//! Captures are classic pcap files; all randomized stages are driven by
//! explicit seeds and reproduce byte-identical outputs.

pub mod channels;
pub mod crypto;
pub mod dataset;
pub mod features;
pub mod flow;
pub mod ml;
pub mod packet;
pub mod pcap;
pub mod profile;
pub mod scalar;

pub(crate) mod rng;

pub use scalar::Scalar;

/// Scalar type used by the CLI and the default pipelines.
pub type DefaultScalar = f64;

pub type PacketFeatures = features::FeatureMatrix<DefaultScalar>;
pub type RandomForest = ml::RandomForestModel<DefaultScalar>;
pub type GradientBoosting = ml::GradientBoostingModel<DefaultScalar>;
pub type Model = ml::Model<DefaultScalar>;





