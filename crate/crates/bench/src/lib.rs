//! Latency harness: runs command round-trips against a loopback testbed and
//! splits each into sign, transport, verify and emulator stages.

pub mod report;
pub mod runner;

pub use report::{
    compare_modes, Aggregate, BenchReport, Comparison, IncomparableReports, Mode, StageAggregates, StageDelta,
    StageTimings, CSV_HEADER, STAGES,
};
pub use runner::{run_bench, BenchError, BenchOptions, Testbed};
