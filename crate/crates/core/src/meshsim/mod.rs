//! Graph-transformer surrogate for mesh field time series.

mod graph;
mod model;
mod rollout;
mod sequence;
mod synth;
mod train;

pub use graph::{augment_adjacency, highest_degree_nodes, Adjacency, AugmentConfig, MeshGraph};
pub use model::{GatedMlp, MaskMode, MaskedAttention, SizeClass, Surrogate, SurrogateConfig, TransformerBlock};
pub use rollout::{pooled_rmse, rollout, DeltaModel, RolloutRecord, ZeroDelta};
pub use sequence::MeshGraphSequence;
pub use synth::{synth_mesh, synth_mesh_sequence, MeshSynthSpec};
pub use train::{train_rollout, Normalizer, RolloutModel, RolloutTrainConfig, RolloutTrainReport};
