//! Command-line harness: configuration, sweeps over the accuracy
//! parameter, log-log fits, CSV and plot-data output.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod sweep;

pub use commands::{
    cmd_check_lemma, cmd_params, cmd_run, cmd_sweep, cmd_weak_order, LemmaCase, ParamsReport, ParticleRecord,
    RunOutput, SweepReport,
};
pub use config::{Config, FlagOverrides, Method, SweepConfig};
pub use error::{CliError, Result};
pub use plot::{emit_plot_data, PlotData, PlotKind};
pub use sweep::{read_rows, repetition_seed, run_sweep, write_rows, RunSummary, SweepOutcome, SweepRow};
