//! Deterministic discrete-event simulator for serverless clusters whose nodes
//! are separated by emulated wide-area links.
//!
//! The crate models a small Kubernetes-style cluster (one headnode, a few
//! workers) running a concurrency-autoscaled sleep function, drives it with a
//! closed-loop load generator, and sweeps link delay x concurrency x
//! processing-time grids into CSV results. Everything is integer-microsecond
//! virtual time; a run is fully determined by its scenario and seed.

pub mod autoscaler;
pub mod cluster;
pub mod kernel;
pub mod loadgen;
pub mod metrics;
pub mod network;
pub mod report;
pub mod rng;
pub mod runner;
pub mod scenario;
pub mod sim;

pub use autoscaler::{Autoscaler, ConcurrencySample, DecisionRow, Mode};
pub use cluster::{ClusterState, Replica, ReplicaState, HEADNODE};
pub use kernel::{ms_to_us, s_to_us, Event, EventHandle, EventKind, Kernel, Message, TraceRecord};
pub use loadgen::{LoadGen, Resolution, TimeoutResolution};
pub use metrics::{analytic_closed_loop_oracle, LatencyHistogram, RunResult};
pub use network::{Link, Traversal};
pub use report::{compare, plot_tables, read_rows, Comparison, ComparisonRow, PlotTable, ReportError};
pub use rng::{mix_run_seed, splitmix64, stream_rng, uniform01, StreamId};
pub use runner::{
    aggregate, execute_ordered, plans_for, run_sweep, AggregateRow, OutputFormat, ResultRow,
    RunnerError, SweepOptions, SweepSummary, RESULTS_HEADER,
};
pub use scenario::{
    derive_delays, expand_grid, AutoscalerConfig, ClusterSpec, DelayProfile, FunctionSpec,
    NetworkSpec, PlacementPolicy, RunPlan, ScenarioConfig, ScenarioError, TopologyKind,
    TopologySpec, WorkloadSpec,
};
pub use sim::{ever_panicked, simulate, Simulation};
