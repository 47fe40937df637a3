//! Unsupervised representation learning with a cluster-level memory
//! dictionary.
//!
//! Pseudo labels come from DBSCAN over the current embeddings; each cluster
//! keeps one representative vector, initialized to the cluster mean and
//! moved toward incoming queries by momentum. Queries are trained with a
//! softmax contrastive loss over all representatives. An instance-level
//! memory baseline is included for controlled comparisons.

pub mod ablation;
pub mod checkpoint;
pub mod cli;
pub mod clustering;
pub mod datagen;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod loss;
pub mod memory;
pub mod sampler;
pub mod trainer;

pub use clustering::{cluster_purity, dbscan, DbscanParams, PseudoLabeling};
pub use dataset::{Dataset, Instance};
pub use encoder::{AdamState, Encoder, LrSchedule};
pub use error::{Error, Result};
pub use eval::{evaluate, EvalOptions, EvalReport, RetrievalSplit};
pub use linalg::{dot, l2_normalize, FeatureVector, RngState};
pub use loss::{centroid_nce, cluster_nce, LossConfig, LossResult};
pub use memory::{ClusterMemory, InstanceMemory};
pub use sampler::{cap_clusters, sample_batch, Batch, SamplerConfig};
pub use trainer::{train, EpochReport, TrainConfig, Variant};
