//! Kinematic maze tasks, the scripted expert and offline datasets.

mod dataset;
mod env;
mod expert;
mod layout;
mod transform;

pub use dataset::{
    gen_dataset, load_dataset, read_dataset, save_dataset, write_dataset, Dataset, DatasetHeader,
    Episode, Step, FORMAT_VERSION,
};
pub use env::{
    achieved_goal, default_horizon, distance, make_env, reward, Env, EnvState, GoalObs, ACTION_DIM,
    ACTION_GAIN, GOAL_DIM, GOAL_RADIUS, OBS_DIM, VELOCITY_DECAY, V_MAX,
};
pub use expert::{expert_action, expert_episode, expert_episode_from, expert_target, track, Controller, ExpertConfig};
pub use layout::{Cell, MazeLayout};
pub use transform::{apply_transform, TaskTransform};
