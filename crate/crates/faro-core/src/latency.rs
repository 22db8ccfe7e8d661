//! Analytic latency estimation for replicated inference jobs.
//!
//! Two estimators are provided. The pessimistic upper bound assumes one
//! second's worth of arrivals lands at once and is served back to back.
//! The queueing estimator models a job as an M/D/c system (Poisson
//! arrivals, deterministic service, c replicas pulling from one queue) and
//! uses the common approximation that M/D/c queue waiting time is half the
//! M/M/c waiting time. The waiting-time percentile comes from the
//! exponential tail `P(Wq > t) = C * exp(-(N/p - lambda) t)` with Erlang-C
//! probability `C`.
//!
//! Inside the solver the replica count is continuous and an unstable queue
//! must not flatten into a single infinite plateau, so `relaxed_mdc_latency`
//! caps utilization at `rho_max` and scales latency linearly with the
//! overload factor past the cap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatencyError {
    #[error("unstable queue: offered load {offered:.4} >= servers {servers:.4}")]
    UnstableQueue { offered: f64, servers: f64 },
}

/// Inputs for the queueing estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueInput {
    /// Deterministic service time per request, seconds.
    pub service_time: f64,
    /// Arrival rate, requests per second.
    pub arrival_rate: f64,
    /// Replica count. Continuous values >= 1 are allowed inside the solver.
    pub replicas: f64,
    /// Percentile of the waiting-time distribution, in (0, 1).
    pub percentile: f64,
}

impl QueueInput {
    pub fn utilization(&self) -> f64 {
        self.service_time * self.arrival_rate / self.replicas
    }

    fn offered_load(&self) -> f64 {
        self.service_time * self.arrival_rate
    }
}

/// Utilization cap used by the relaxed estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationKnobs {
    pub rho_max: f64,
}

impl Default for RelaxationKnobs {
    fn default() -> Self {
        Self { rho_max: 0.95 }
    }
}

/// Erlang-C: probability an arrival to an M/M/c queue has to wait.
///
/// Computed through the Erlang-B recurrence, which stays stable for large
/// server counts where the factorial form overflows.
pub fn erlang_c(servers: u32, offered_load: f64) -> Result<f64, LatencyError> {
    let c = servers.max(1) as f64;
    if offered_load >= c {
        return Err(LatencyError::UnstableQueue {
            offered: offered_load,
            servers: c,
        });
    }
    Ok(erlang_c_unchecked(servers.max(1) as u64, offered_load))
}

/// Erlang-C through the Erlang-B recurrence; callers guarantee a < c.
fn erlang_c_unchecked(servers: u64, a: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let mut b = 1.0;
    for j in 1..=servers {
        b = a * b / (j as f64 + a * b);
    }
    let rho = a / servers as f64;
    (b / (1.0 - rho * (1.0 - b))).clamp(0.0, 1.0)
}

/// Erlang-C extended to non-integer server counts by linear interpolation
/// between the neighbouring integers. Saturates to 1 when a floor'd server
/// count can no longer carry the load.
fn erlang_c_continuous(servers: f64, a: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let lo = servers.floor().max(1.0);
    let hi = servers.ceil().max(1.0);
    let at = |c: f64| -> f64 {
        if a >= c {
            1.0
        } else {
            erlang_c_unchecked(c as u64, a)
        }
    };
    if lo == hi {
        return at(lo);
    }
    let frac = servers - lo;
    ((1.0 - frac) * at(lo) + frac * at(hi)).clamp(0.0, 1.0)
}

/// k-th percentile of M/M/c queue waiting time, seconds.
///
/// Zero when the queueing probability is already below the tail mass
/// `1 - k`. Errors when the queue is unstable.
pub fn mmc_wait_quantile(input: &QueueInput) -> Result<f64, LatencyError> {
    if input.arrival_rate <= 0.0 {
        return Ok(0.0);
    }
    let rho = input.utilization();
    if rho >= 1.0 {
        return Err(LatencyError::UnstableQueue {
            offered: input.offered_load(),
            servers: input.replicas,
        });
    }
    let c = erlang_c_continuous(input.replicas, input.offered_load());
    let tail = 1.0 - input.percentile;
    if c <= tail {
        return Ok(0.0);
    }
    let drain_rate = input.replicas / input.service_time - input.arrival_rate;
    Ok(((c / tail).ln() / drain_rate).max(0.0))
}

/// M/D/c percentile latency estimate: service time plus half the M/M/c
/// waiting quantile. Infinite when the queue is unstable.
pub fn mdc_latency(input: &QueueInput) -> f64 {
    match mmc_wait_quantile(input) {
        Ok(wait) => input.service_time + 0.5 * wait,
        Err(_) => f64::INFINITY,
    }
}

/// Plateau-free M/D/c estimate used inside optimization.
///
/// Up to `rho_max` this is exactly `mdc_latency`. Past the cap the queue
/// would be (close to) unstable, so latency is instead the capped-load
/// estimate scaled by the overload factor `lambda / lambda_cap`: finite
/// everywhere, continuous at the cap, and strictly increasing with load.
pub fn relaxed_mdc_latency(input: &QueueInput, knobs: &RelaxationKnobs) -> f64 {
    if input.arrival_rate <= 0.0 {
        return input.service_time;
    }
    let rho = input.utilization();
    if rho <= knobs.rho_max {
        return mdc_latency(input);
    }
    let lambda_cap = knobs.rho_max * input.replicas / input.service_time;
    let capped = QueueInput {
        arrival_rate: lambda_cap,
        ..*input
    };
    (input.arrival_rate / lambda_cap) * mdc_latency(&capped)
}

/// Pessimistic replica count: one second of arrivals served back to back
/// must finish inside the SLO target.
pub fn upper_bound_replicas(arrival_rate: f64, service_time: f64, slo_target: f64) -> u32 {
    let need = service_time * arrival_rate / slo_target;
    // Nudge below the ceiling so exact integer workloads don't round up.
    ((need - 1e-9).ceil().max(1.0)) as u32
}

/// Smallest replica count whose M/D/c latency estimate meets `target`,
/// searched up to `limit`. None when even `limit` replicas miss it.
pub fn min_replicas_mdc(
    arrival_rate: f64,
    service_time: f64,
    target: f64,
    percentile: f64,
    limit: u32,
) -> Option<u32> {
    for n in 1..=limit.max(1) {
        let input = QueueInput {
            service_time,
            arrival_rate,
            replicas: n as f64,
            percentile,
        };
        if mdc_latency(&input) <= target {
            return Some(n);
        }
    }
    None
}
