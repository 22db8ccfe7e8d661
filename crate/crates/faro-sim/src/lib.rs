//! Matched discrete-event simulation of a multi-tenant inference cluster:
//! trace-driven Poisson arrivals, per-job router queues with tail drop,
//! deterministic-service replicas with cold start, metric collection, and
//! the autoscaling policies driven by the engine's ticks.

pub mod autoscaler;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod policy;
pub mod runner;

pub use autoscaler::{shrink, shrink_plan, AblationFlags, FaroPolicy};
pub use config::{AutoscalerConfig, ServiceModel, SimConfig};
pub use engine::{derive_seed, generate_arrivals, ClusterEngine, EngineHooks};
pub use metrics::{build_report, percentile, ClusterMinute, JobReport, MetricsReport, MinuteRecord};
pub use policy::{
    AiadPolicy, ClusterState, FairSharePolicy, JobState, MarkPolicy, OneshotPolicy, PlanUpdate,
    PolicyCtx, PolicyError, ScalingPolicy, StreakTracker,
};
pub use runner::{run_trial, TrialSetup};
