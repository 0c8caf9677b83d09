//! Experiment configuration, training runs, hyperparameter sweeps and
//! result comparison.

mod compare;
mod config;
mod nscheck;
mod output;
mod runner;
mod sweep;

pub use compare::{compare, render_table, CompareRow, ComparisonReport, Improvement};
pub use config::{CsvSource, DatasetSource, ModelConfig, OptimizerConfig, PreparedSource, RunConfig};
pub use nscheck::{conditioned_matrix, ns_check, NsCheckReport, NS_CHECK_MAX_COND, NS_CHECK_SHAPES};
pub use output::{
    metrics_csv, read_checkpoint, read_summary, write_checkpoint, write_run, ManifestEntry, CHECKPOINT_FILE,
    MANIFEST_FILE, METRICS_FILE, SUMMARY_FILE,
};
pub use runner::{run_experiment, run_with_dataset, EvalRow, RunRecord, RunSummary};
pub use sweep::{
    adam_config, lr_sweep, lr_sweep_csv, muon_config, run_all, two_stage_sweep, CellOutcome, Grid, LrRow, Selection,
    Stage, SweepCell, SweepReport,
};
