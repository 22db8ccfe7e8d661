//! Simulation and autoscaler cadence knobs.

use faro_core::ResourceLimits;
use serde::{Deserialize, Serialize};

/// Service-time law of a replica. Production inference is modeled as
/// deterministic; the exponential switch exists so the engine can be
/// validated against M/M/c closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ServiceModel {
    Deterministic,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Simulated seconds.
    pub duration: f64,
    pub seed: u64,
    /// Router queue length at which arrivals are tail-dropped.
    pub tail_drop_threshold: usize,
    /// Seconds between requesting a replica and it serving traffic.
    pub cold_start_delay: f64,
    /// Metric bucket width in seconds.
    pub measurement_interval: f64,
    pub limits: ResourceLimits,
    pub service_model: ServiceModel,
    /// Collect per-request queueing delays (used by queueing validation).
    pub record_waits: bool,
}

impl SimConfig {
    pub fn new(duration: f64, seed: u64, limits: ResourceLimits) -> Self {
        Self {
            duration,
            seed,
            tail_drop_threshold: 50,
            cold_start_delay: 60.0,
            measurement_interval: 60.0,
            limits,
            service_model: ServiceModel::Deterministic,
            record_waits: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoscalerConfig {
    /// Long-term predictive planning period, seconds.
    pub long_period: f64,
    /// Short-term reactive period, seconds.
    pub short_period: f64,
    /// Prediction horizon in intervals.
    pub horizon: usize,
    /// Replica cold-start planning delay, seconds.
    pub cold_start_delay: f64,
    /// Sustained-violation duration before reactive upscale, seconds.
    pub upscale_trigger: f64,
    /// Sustained-satisfaction duration before reactive downscale, seconds.
    pub downscale_trigger: f64,
    /// Prediction samples per forecast.
    pub sample_count: usize,
    /// Minutes of arrival history handed to predictors.
    pub history_window: usize,
}

impl Default for AutoscalerConfig {
    fn default() -> Self {
        Self {
            long_period: 300.0,
            short_period: 10.0,
            horizon: 7,
            cold_start_delay: 60.0,
            upscale_trigger: 30.0,
            downscale_trigger: 300.0,
            sample_count: 100,
            history_window: 15,
        }
    }
}
