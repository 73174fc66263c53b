//! Trace ingestion and generation, experiment configuration and the sweep
//! runner.

pub mod config;
pub mod frontier;
pub mod generate;
pub mod ingest;
pub mod runner;

pub use config::{BatterySpec, ExperimentConfig, KernelMode, MdpSpec, MeasureSpec, PolicySpec, TariffSpec, TraceSource};
pub use frontier::{compare_frontiers, cost_at_variance, offline_frontier, FrontierComparison, FrontierPoint};
pub use generate::{generate, spiky_fixture_spec, Generator, SyntheticSpec};
pub use ingest::{ingest_csv, read_trace_csv, resample, write_trace_csv};
pub use runner::{
    run_experiment, simulate_config, write_experiment, write_simulation_csv, ExperimentOutput, Manifest, ResultRow,
};
