//! Training loop, evaluation, full-model gradient checking and experiment
//! orchestration.

mod config;
mod experiment;
pub mod gradcheck;
mod model;
mod train;

pub use config::{RunConfig, Task};
pub use experiment::{
    format_sweep_table, load_data, metrics_row, run_dir_name, run_experiment, run_with_data, sweep,
    RunStatus, RunSummary, SweepGrid, SweepRow, SweepSpec, TaskData, CHECKPOINT_FILE, CONFIG_FILE,
    METRICS_FILE, METRICS_HEADER, SUMMARY_FILE,
};
pub use gradcheck::{compare_gradients, gradient_check_model, GradCheckReport};
pub use model::{DropoutCtx, Model, ModelInput};
pub use train::{evaluate, train_epoch, MetricsRecord, TrainState};
