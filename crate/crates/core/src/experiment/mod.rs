//! Streams, run configurations and the runner that turns them into reports.

mod config;
mod run;
mod stream;

pub use config::{Method, RunConfig, TrainSettings, LAMBDA_GRID};
pub use run::{
    eval_seed, load_run_reports, reference_success, run_baseline_seed, run_experiment, run_on_tasks,
    run_subspace_seed, subspace_notes, write_run, Artifact, Manifest, RunOutput, SeedRun, MANIFEST_VERSION,
};
pub use stream::{DataSource, StreamSpec, StreamTask, TaskSpec, REFERENCE_EPISODES};
