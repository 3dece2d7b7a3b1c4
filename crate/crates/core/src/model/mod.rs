//! Embedding network, prototype head and optimizer.

mod adam;
pub mod checkpoint;
mod head;
mod mlp;

pub use adam::{AdamState, DEFAULT_LR};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use head::{
    backprop_episode, build_partition, compute_prototypes, episode_gradients, episode_loss,
    forward_episode, head_backward, predict, EpisodePass, PrototypeSet,
};
pub use mlp::{mlp_init, DenseLayer, ForwardCache, MlpParams, ParamGrads, SampleTrace};
