//! Core building blocks for SLO-aware autoscaling of inference clusters:
//! utility functions distilled from latency SLOs, analytic queueing
//! latency estimates, the five cluster objectives in precise and relaxed
//! form, a derivative-free constrained solver with hierarchical grouping,
//! probabilistic arrival-rate predictors, and trace preparation.

pub mod latency;
pub mod objectives;
pub mod predictor;
pub mod solver;
pub mod traces;
pub mod utility;

pub use latency::{
    erlang_c, mdc_latency, min_replicas_mdc, mmc_wait_quantile, relaxed_mdc_latency,
    upper_bound_replicas, LatencyError, QueueInput, RelaxationKnobs,
};
pub use objectives::{
    cluster_objective, constraint_residuals, is_feasible, job_predicted_utility, AllocationPlan,
    ClusterObjectiveSpec, ColdStart, JobLoad, JobSpec, LatencyModel, LoadAggregation,
    ObjectiveEvaluator,
    ObjectiveForm, ObjectiveKind, ResourceLimits,
};
pub use predictor::{
    load_forecast_file, sample_trajectories, DampedMeanPredictor, FilePredictor, OraclePredictor,
    ProbabilisticForecast, RateHistory, RatePredictor, SeasonalNaivePredictor,
};
pub use solver::{
    hierarchical_solve, integerize, normalized_residuals, solve_relaxed, SolveOutcome,
    SolverConfig, CONSTRAINT_TOLERANCE,
};
pub use traces::{
    load_trace, rescale, split, synth_trace, window_average, RateSeries, SynthKind, TraceError,
    MINUTES_PER_DAY,
};
pub use utility::{
    effective_utility, penalty_multiplier, utility_original, utility_relaxed, PenaltySchedule,
    Slo, UtilityParams,
};
