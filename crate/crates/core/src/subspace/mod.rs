//! Growing subspaces of policies: anchors, simplex weights, extension with
//! learned anchor scores, Dirichlet exploration and the prune/extend rule.

mod anchor;
mod learn;
mod model;
mod objective;
mod simplex;
mod space;

pub use anchor::{layer_rank, Anchor, LoraAnchor, LoraBase, LoraFactor, SubspaceShape};
pub use learn::{
    adapt_decision, exploration_candidates, explore_previous, learn_first_task, learn_next_task, pac_gate,
    train_first_anchor, train_new_anchor, Decision, Extension, Outcome, PacConfig, PacOutcome, SubspaceConfig,
    TaskRecord,
};
pub use model::{learn_stream, HispoConfig, RoleSubspace, SubspaceModel, Variant, DEFAULT_LORA_RANK, MODEL_VERSION};
pub use objective::{Objective, Role};
pub use simplex::{project_simplex, sample_simplex, softmax, SimplexWeights, SIMPLEX_TOL};
pub use space::{combine_dense, PolicySubspace};
