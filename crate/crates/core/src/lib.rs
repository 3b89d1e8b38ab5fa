//! Generative models of temporal interaction graphs.
//!
//! Training data are temporal random walks over a timestamped edge list. A
//! recurrent network learns the next node and, through a log-normal mixture,
//! the gap to the next interaction. Synthetic walks sampled from the model are
//! assembled back into a graph and scored against the source.

pub mod alias;
pub mod assembly;
pub mod checkpoint;
pub mod error;
pub mod graph;
pub mod inductive;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod seqmodel;
pub mod synth;
pub mod tpp;
pub mod train;
pub mod walker;

pub use alias::AliasTable;
pub use error::{Error, Result};
pub use graph::{
    load_edge_list, save_edge_list, EdgeListImport, SnapshotMode, StaticGraph, TemporalEdge,
    TemporalGraph,
};
pub use tpp::{MixtureHead, MixtureParams};
pub use walker::{StartSampling, Walk, WalkSet, WalkStep, Walker};
pub use assembly::{assemble, count_alpha, AlphaCounts, GeneratedGraph};
pub use checkpoint::Checkpoint;
pub use inductive::{EmbeddingTable, InductiveConfig, InductiveModel};
pub use metrics::{error_report, stats, ErrorReport, NodeIdentity, SnapshotStats, STAT_NAMES};
pub use pipeline::{Mode, RunConfig, Trained};
pub use seqmodel::{TrainConfig, TransductiveModel};
pub use train::LossCurve;
