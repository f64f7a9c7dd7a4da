//! Hierarchical network GLMs for multi-neuron spike trains, fitted by
//! Pólya-gamma augmented, collapsed Gibbs sampling.

pub mod activation;
pub mod chain;
pub mod error;
pub mod eval;
pub mod gibbs;
pub mod network;
pub mod polyagamma;
pub mod rng;
pub mod simulate;
pub mod spikes;
pub mod stats;

pub use activation::{Basis, FilteredSpikes};
pub use error::{Error, Result};
pub use network::{AdjacencyKind, NetworkState, PriorConfig, PriorSpec, SelfEdges, WeightKind};
pub use rng::{ChainRng, Phase, Streams};
pub use spikes::{CountModel, ObsKind, ObsModel, SpikeData};
pub use chain::{Chain, ChainSample};
pub use eval::{Comparison, PredictiveEstimate};
pub use gibbs::{Sampler, SweepConfig, SweepRecord, Updates};
