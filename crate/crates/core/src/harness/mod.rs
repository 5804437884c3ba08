//! Config-driven experiment runner.
//!
//! One run simulates a truth trajectory and observation stream, then replays
//! that stream through every configured filter and, optionally, the grid
//! oracle. Output files:
//!
//! - `metrics.csv`: one row per filter per run, columns [`METRICS_COLUMNS`]
//!   (schema version [`METRICS_SCHEMA_VERSION`] in the first column).
//! - `trajectories/<filter>.csv`, `trajectories/oracle.csv`,
//!   `trajectories/truth.csv`: `run, step, time, estimate, variance`. The
//!   estimate is the (Fréchet) mean in chart coordinates and the variance is
//!   the mean squared distance to it. Truth rows carry variance 0.
//! - `streams/run<r>.csv`: `step, time, x0, count_<label>..`; row `k` holds
//!   the state at `t_k` and the events of the interval ending at `t_k`.
//! - `manifest.json`: resolved config, seeds, input hash and file hashes.
//!
//! Everything except the `wall_seconds` column is bit-identical on rerun.

mod config;
mod metrics;
mod run;

pub use config::{
    config_reference, parse_config, parse_config_str, BpfSettings, ChannelSpec, ExperimentConfig, FilterKind,
    GainSettings, KernelFamily, ModelSpec, OracleSettings, PpfpfSettings, Preset, StateSpace,
};
pub use metrics::{
    compute_metrics, write_metrics_csv, MetricFields, MetricsRow, RunStatus, METRICS_COLUMNS,
    METRICS_SCHEMA_VERSION,
};
pub use run::{
    input_hash, run_experiment, run_filter, run_oracle, run_oracle_only, simulate_run, stream_rng, streams,
    write_artifacts, ExperimentReport, FilterDiagnostics, FilterRun, RunResult, Trace,
};
