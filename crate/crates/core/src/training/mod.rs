//! Backpropagation through time with SGD, the layer-replacement grid and
//! gradient-explosion diagnostics.

mod checkpoint;
mod diagnostics;
mod grid;
mod metrics;
mod optimizer;
mod run;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FILE, ENCODER_FILE};
pub use diagnostics::{
    gradient_diagnostics, long_sequences, DiagnosticSummary, DiagnosticsConfig, DirectionCheck,
    Variant,
};
pub use grid::{grid_runs, grid_table, replacement_grid, GridRow};
pub use metrics::{EpochMetrics, RunMetrics, StepMetrics};
pub use optimizer::{clip_gradients, global_norm, sgd_step, Optimizer, Sgd, StepReport};
pub use run::{evaluate, train_run, train_run_with, Evaluation, TrainConfig, TrainOutcome, Trainer};
