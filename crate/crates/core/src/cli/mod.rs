//! Experiment harness behind the `etlalm` binary.

pub mod config;
pub mod experiment;

pub use config::{parse_assignments, Assignment, BetaSpec, EtaSpec, ExperimentConfig, Problem};
pub use experiment::{
    compare_schedules, run_experiment, ComparisonTable, ExperimentReport, RunSummary, TraceRow,
    COMPARE_THRESHOLDS, TRACE_HEADER,
};
