//! Goal-conditioned behaviour cloning: relabelling, batches, hierarchical
//! policies and training loops.

mod data;
mod her;
mod policy;
mod train;

pub use data::{make_high_batch, make_low_batch, policy_input, EpisodeView, TaskData, POLICY_INPUT_DIM};
pub use her::{her_index, her_offset, her_relabel, HerConfig};
pub use policy::{
    hier_act, load_policy, save_policy, Actor, Checkpoint, CheckpointHeader, HierActor, HierPolicy, PolicyNet,
    CHECKPOINT_VERSION,
};
pub use train::{
    desk_her_temperature, desk_waystep, finetune_hbc, fit, init_hbc, level_batch, level_full_batch, level_loss,
    reference_her_temperature, reference_waystep, train_bc, train_hbc, train_level, HbcShapes, Level, TrainConfig,
    DESK_STEP_SCALE,
};
