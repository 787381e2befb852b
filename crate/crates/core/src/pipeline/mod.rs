//! Run configuration and the commands behind the `redraw` binary. Every
//! command validates and computes before writing anything, and is
//! deterministic for a given config.

mod commands;
mod config;

pub use commands::{
    cmd_cluster, cmd_eval, cmd_redraw, cmd_synth, cmd_train_encoder, cmd_train_redrawer, comparison_grid, ClusterReport,
    RedrawSummary, RegionOutcome, SynthSummary, TrainSummary,
};
pub use config::{files, ClusterConfig, EvalConfig, RedrawConfig, RunConfig, SynthConfig};
