//! Experiment harness: scenario configs, trial orchestration, report
//! emission, policy comparison, queueing validation, ablation sweeps, and
//! the solver-scaling benchmark behind the `faro` CLI.

pub mod bundled;
pub mod compare;
pub mod queueing;
pub mod report;
pub mod run;
pub mod scenario;

pub use bundled::{right_size_replicas, ten_job_mix};
pub use compare::{compare, kendall_tau_distance, ComparisonRow, ComparisonTable};
pub use report::{mean_sd, write_json, write_timeline_csv, AggregateReport, JobSummary, TrialSummary};
pub use run::{
    apply_overrides, bench_solver, run_ablation, run_policy_trials, run_scenario,
    run_scenario_file, AblationRow, RunOptions, SolverBenchRow, ABLATION_AXES,
};
pub use scenario::{
    build_policy, prepare, JobConfig, PolicyName, PredictorConfig, PreparedScenario,
    ScenarioConfig, SolverSettings, TraceBinding,
};
pub use queueing::{simulate_mmc_wait_quantiles, validation_sweep, QueueingCell};
