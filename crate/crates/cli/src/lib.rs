//! Library surface of the command-line runner: configuration, experiment
//! preparation, and the run / bench / alpha-sweep commands.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{
    cmd_alpha_sweep, cmd_bench, cmd_run, execute, prepare, resolve_out_root, AlphaRow, BenchReport,
    BenchRow, BenchSummaryRow, Experiment, RunSummary,
};
pub use config::{
    load_config, parse_avg, parse_order, AlgorithmName, ModelConfig, Overrides, RunConfig,
    ScenarioName, TaskConfig,
};
