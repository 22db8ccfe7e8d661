//! Per-job utility functions distilled from latency SLOs.
//!
//! A job's SLO is a latency target paired with a percentile. The step
//! utility is 1 when the measured percentile latency meets the target and
//! 0 otherwise. Because the step has plateaus that stall local optimizers,
//! the relaxed form `min((s/l)^alpha, 1)` is used inside optimization: it
//! agrees with the step wherever the target is met and decays smoothly
//! past it. Dropped requests are charged through a penalty multiplier
//! derived from availability credit bands.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum UtilityError {
    #[error("SLO target latency must be positive, got {0}")]
    NonPositiveTarget(f64),
    #[error("SLO percentile must be in (0, 1], got {0}")]
    PercentileOutOfRange(f64),
    #[error("utility exponent alpha must be >= 1, got {0}")]
    AlphaTooSmall(f64),
    #[error("penalty schedule invalid: {0}")]
    BadSchedule(String),
}

/// Latency Service Level Objective: a target and the percentile it applies to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slo {
    /// Target latency in seconds.
    pub target_latency: f64,
    /// Percentile the target applies to, in (0, 1]. 0.99 means p99.
    pub percentile: f64,
}

impl Slo {
    pub fn new(target_latency: f64, percentile: f64) -> Result<Self, UtilityError> {
        if !(target_latency > 0.0) {
            return Err(UtilityError::NonPositiveTarget(target_latency));
        }
        if !(percentile > 0.0 && percentile <= 1.0) {
            return Err(UtilityError::PercentileOutOfRange(percentile));
        }
        Ok(Self {
            target_latency,
            percentile,
        })
    }
}

/// Shape parameter of the relaxed utility curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    /// Exponent alpha >= 1. Larger values approach the step utility.
    pub alpha: f64,
}

impl UtilityParams {
    pub fn new(alpha: f64) -> Result<Self, UtilityError> {
        if !(alpha >= 1.0) {
            return Err(UtilityError::AlphaTooSmall(alpha));
        }
        Ok(Self { alpha })
    }
}

impl Default for UtilityParams {
    /// Alpha 4 keeps the curve steep but still smooth enough for the solver.
    fn default() -> Self {
        Self { alpha: 4.0 }
    }
}

/// Availability credit bands, mirroring the service-credit tables cloud
/// providers publish: the lower the availability (1 - drop rate), the more
/// credit is returned and the less the served utility counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    /// `(availability_threshold, credit)` rows ordered by strictly decreasing
    /// availability. A row applies to availabilities at or above its
    /// threshold (and below the previous row's threshold).
    pub breakpoints: Vec<(f64, f64)>,
    /// Step mode returns the matching band's credit; relaxed mode
    /// interpolates credits linearly between thresholds so the multiplier
    /// has no jumps for the optimizer to fall off.
    pub relaxed: bool,
}

impl PenaltySchedule {
    pub fn new(breakpoints: Vec<(f64, f64)>, relaxed: bool) -> Result<Self, UtilityError> {
        if breakpoints.is_empty() {
            return Err(UtilityError::BadSchedule("no breakpoints".into()));
        }
        for w in breakpoints.windows(2) {
            if w[1].0 >= w[0].0 {
                return Err(UtilityError::BadSchedule(
                    "availabilities must be strictly decreasing".into(),
                ));
            }
            if w[1].1 < w[0].1 {
                return Err(UtilityError::BadSchedule(
                    "credits must be non-decreasing as availability drops".into(),
                ));
            }
        }
        if breakpoints
            .iter()
            .any(|&(a, c)| !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&c))
        {
            return Err(UtilityError::BadSchedule(
                "availabilities and credits must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            relaxed,
        })
    }

    /// The AWS-style credit table: >= 99% availability costs nothing,
    /// then 25%, 50%, and 100% credit as availability degrades.
    ///
    /// The relaxed variant anchors the interpolation at full availability
    /// instead of keeping the free band: a zero-cost band below 100%
    /// availability makes the optimizer thin every job by the band width
    /// even when nothing is gained, so dropping has to start charging
    /// immediately for the relaxed objective to stay honest.
    pub fn credit_bands(relaxed: bool) -> Self {
        if relaxed {
            Self {
                breakpoints: vec![(1.0, 0.0), (0.95, 0.25), (0.90, 0.50), (0.0, 1.0)],
                relaxed,
            }
        } else {
            Self {
                breakpoints: vec![(0.99, 0.0), (0.95, 0.25), (0.90, 0.50), (0.0, 1.0)],
                relaxed,
            }
        }
    }

    /// Credit owed at a given availability.
    fn credit(&self, availability: f64) -> f64 {
        let a = availability.clamp(0.0, 1.0);
        if self.relaxed {
            self.credit_interpolated(a)
        } else {
            self.credit_step(a)
        }
    }

    fn credit_step(&self, a: f64) -> f64 {
        for &(threshold, credit) in &self.breakpoints {
            if a >= threshold {
                return credit;
            }
        }
        // Below the last threshold: worst band.
        self.breakpoints.last().map(|&(_, c)| c).unwrap_or(1.0)
    }

    fn credit_interpolated(&self, a: f64) -> f64 {
        let first = self.breakpoints[0];
        if a >= first.0 {
            return first.1;
        }
        for w in self.breakpoints.windows(2) {
            let (hi_a, hi_c) = w[0];
            let (lo_a, lo_c) = w[1];
            if a >= lo_a {
                let t = (hi_a - a) / (hi_a - lo_a);
                return hi_c + t * (lo_c - hi_c);
            }
        }
        self.breakpoints.last().map(|&(_, c)| c).unwrap_or(1.0)
    }
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self::credit_bands(false)
    }
}

/// Step utility: 1 iff the latency meets the SLO target.
///
/// Infinite latency (the accounting value for dropped requests) scores 0.
pub fn utility_original(latency: f64, slo: &Slo) -> f64 {
    if latency <= slo.target_latency {
        1.0
    } else {
        0.0
    }
}

/// Relaxed utility `min((s/l)^alpha, 1)`.
///
/// Equals the step utility for `l <= s`, decays smoothly for `l > s`, and
/// converges to the step pointwise as alpha grows. Zero latency is treated
/// as meeting the target.
pub fn utility_relaxed(latency: f64, slo: &Slo, params: &UtilityParams) -> f64 {
    if latency <= 0.0 {
        return 1.0;
    }
    if latency.is_infinite() {
        return 0.0;
    }
    (slo.target_latency / latency).powf(params.alpha).min(1.0)
}

/// Multiplier phi(d) in [0, 1] applied to the utility of served requests.
///
/// `phi = 1 - credit(availability)` with `availability = 1 - drop_rate`.
pub fn penalty_multiplier(drop_rate: f64, schedule: &PenaltySchedule) -> f64 {
    let availability = (1.0 - drop_rate.clamp(0.0, 1.0)).clamp(0.0, 1.0);
    (1.0 - schedule.credit(availability)).clamp(0.0, 1.0)
}

/// Effective utility: served-request utility discounted by the drop penalty.
pub fn effective_utility(utility_non_dropped: f64, drop_rate: f64, schedule: &PenaltySchedule) -> f64 {
    penalty_multiplier(drop_rate, schedule) * utility_non_dropped
}
