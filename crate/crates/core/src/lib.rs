//! Bottom-up nuclei analysis for histology tiles.
//!
//! The pipeline runs in three stages: a deterministic three-head attention
//! network produces semantic, edge, and class probability maps; a
//! marker-controlled watershed converts the semantic and edge maps into
//! instance labels; majority pixel-voting assigns one nuclei class per
//! instance. Evaluation covers Dice and binary/multi-class panoptic quality
//! with a brute-force oracle, and a seeded synthetic-scene generator powers
//! the test corpus.

pub mod classify;
pub mod components;
pub mod config;
pub mod instseg;
pub mod losses;
pub mod maps;
pub mod metrics;
pub mod network;
pub mod synth;

pub use classify::{classify_instances, InstanceRecord};
pub use instseg::{segment_instances, WatershedConfig};
pub use losses::LossWeights;
pub use maps::{ClassMap, ClassProbMap, LabelMap, MapError, ProbMap, RGBImage, NUM_CLASSES};
pub use metrics::{match_instances, mpq_dataset, oracle_pq, pq, MatchResult, PQScore};
pub use network::{forward, NetworkConfig, WeightBundle};
pub use synth::{edges_from_labels, generate_scene, SceneSpec};
