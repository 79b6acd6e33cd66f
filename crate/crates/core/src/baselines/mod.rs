//! Comparison strategies over the same hierarchical backbone.

mod pnn;
mod reg;
mod strategy;

pub use pnn::{lateral_block, pnn_actor, pnn_param_count, PnnColumn, PnnNet, PnnPolicy, PnnView};
pub use reg::{estimate_fisher, reg_penalty, total_penalty, train_level_penalized, RegKind, RegState};
pub use strategy::{learn_baseline_stream, PolicyStore, StrategyConfig, StrategyKind};
