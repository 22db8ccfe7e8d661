//! Per-minute metric assembly and end-of-run reports.
//!
//! Requests are bucketed by arrival minute. A minute's p99 is the
//! nearest-rank percentile over everything that arrived in it, with
//! dropped requests counted at infinite latency, so a minute that drops
//! more than its tail mass reports an infinite percentile and zero
//! utility. Utility is the relaxed curve applied to the measured
//! percentile; effective utility additionally discounts by the step
//! credit-band multiplier at the minute's observed drop fraction.

use faro_core::{
    effective_utility, utility_relaxed, JobSpec, PenaltySchedule, UtilityParams,
};
use serde::{Deserialize, Serialize};

use crate::engine::{ClusterEngine, FinalizedMinute};

/// Nearest-rank percentile; infinity-aware. Empty input yields None.
pub fn percentile(sorted: &[f64], k: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let idx = ((sorted.len() as f64 * k).ceil() as usize).clamp(1, sorted.len()) - 1;
    Some(sorted[idx])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteRecord {
    pub minute: usize,
    pub arrivals: u64,
    pub tail_drops: u64,
    pub explicit_drops: u64,
    /// Latencies recorded in this minute (completions + drops).
    pub recorded: u64,
    /// SLO-percentile latency over recorded requests, drops at infinity.
    /// None when nothing was recorded.
    pub p99: Option<f64>,
    /// Same percentile over served requests only.
    pub p99_served: Option<f64>,
    /// Requests whose latency met the SLO target.
    pub satisfied: u64,
    /// Relaxed utility of `p99`; idle minutes score 1.
    pub utility: f64,
    /// Utility of served requests discounted by the drop penalty band.
    pub effective_utility: f64,
    pub planned_replicas: u32,
    pub ready_replicas: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub id: String,
    pub minutes: Vec<MinuteRecord>,
    /// Violating requests over all incoming requests, drops included.
    pub slo_violation_rate: f64,
    pub mean_utility: f64,
    pub mean_effective_utility: f64,
    pub arrivals: u64,
    pub completions: u64,
    pub tail_drops: u64,
    pub explicit_drops: u64,
    pub in_flight_at_end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMinute {
    pub minute: usize,
    pub utility: f64,
    pub effective_utility: f64,
    pub max_utility: f64,
    pub arrivals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub seed: u64,
    pub jobs: Vec<JobReport>,
    pub cluster_minutes: Vec<ClusterMinute>,
    /// Mean over minutes of (max cluster utility - achieved).
    pub mean_lost_utility: f64,
    pub mean_lost_effective_utility: f64,
    /// Mean of per-job SLO violation rates.
    pub cluster_violation_rate: f64,
    /// Long-term cycles where the solver fell back to the current plan.
    pub degraded_cycles: u64,
    /// Short-term upscales denied for lack of headroom.
    pub starved_upscales: u64,
}

impl MetricsReport {
    /// Arrivals must equal completions plus drops plus in-flight, per job.
    pub fn conservation_holds(&self) -> bool {
        self.jobs.iter().all(|j| {
            j.arrivals == j.completions + j.tail_drops + j.explicit_drops + j.in_flight_at_end
        })
    }

    pub fn mean_cluster_utility(&self) -> f64 {
        if self.cluster_minutes.is_empty() {
            return 0.0;
        }
        self.cluster_minutes.iter().map(|m| m.utility).sum::<f64>()
            / self.cluster_minutes.len() as f64
    }
}

/// Builds the report from a finished engine.
pub fn build_report(
    engine: &ClusterEngine,
    jobs: &[JobSpec],
    policy: &str,
    utility_params: &UtilityParams,
    degraded_cycles: u64,
    starved_upscales: u64,
) -> MetricsReport {
    let n = jobs.len();
    let penalty = PenaltySchedule::credit_bands(false);
    let mut per_job: Vec<Vec<MinuteRecord>> = vec![Vec::new(); n];

    for f in &engine.finalized {
        per_job[f.job].push(minute_record(f, &jobs[f.job], utility_params, &penalty));
    }

    let minutes = per_job.iter().map(|m| m.len()).max().unwrap_or(0);
    let mut cluster_minutes = Vec::with_capacity(minutes);
    let max_utility: f64 = jobs.iter().map(|j| j.priority).sum();
    for m in 0..minutes {
        let mut utility = 0.0;
        let mut eu = 0.0;
        let mut arrivals = 0u64;
        for (j, records) in per_job.iter().enumerate() {
            if let Some(r) = records.get(m) {
                utility += jobs[j].priority * r.utility;
                eu += jobs[j].priority * r.effective_utility;
                arrivals += r.arrivals;
            }
        }
        cluster_minutes.push(ClusterMinute {
            minute: m,
            utility,
            effective_utility: eu,
            max_utility,
            arrivals,
        });
    }

    let job_reports: Vec<JobReport> = per_job
        .into_iter()
        .enumerate()
        .map(|(i, minutes)| {
            let rt = &engine.jobs[i];
            let total: u64 = minutes.iter().map(|r| r.recorded).sum();
            let satisfied: u64 = minutes.iter().map(|r| r.satisfied).sum();
            let mean_utility = if minutes.is_empty() {
                1.0
            } else {
                minutes.iter().map(|r| r.utility).sum::<f64>() / minutes.len() as f64
            };
            let mean_eu = if minutes.is_empty() {
                1.0
            } else {
                minutes.iter().map(|r| r.effective_utility).sum::<f64>() / minutes.len() as f64
            };
            JobReport {
                id: jobs[i].id.clone(),
                slo_violation_rate: if total == 0 {
                    0.0
                } else {
                    (total - satisfied) as f64 / total as f64
                },
                mean_utility,
                mean_effective_utility: mean_eu,
                arrivals: rt.arrivals,
                completions: rt.completions,
                tail_drops: rt.tail_drops,
                explicit_drops: rt.explicit_drops,
                in_flight_at_end: rt.in_flight(),
                minutes,
            }
        })
        .collect();

    let cluster_violation_rate = if job_reports.is_empty() {
        0.0
    } else {
        job_reports.iter().map(|j| j.slo_violation_rate).sum::<f64>() / job_reports.len() as f64
    };
    let mean_lost_utility = if cluster_minutes.is_empty() {
        0.0
    } else {
        cluster_minutes
            .iter()
            .map(|m| m.max_utility - m.utility)
            .sum::<f64>()
            / cluster_minutes.len() as f64
    };
    let mean_lost_effective_utility = if cluster_minutes.is_empty() {
        0.0
    } else {
        cluster_minutes
            .iter()
            .map(|m| m.max_utility - m.effective_utility)
            .sum::<f64>()
            / cluster_minutes.len() as f64
    };

    MetricsReport {
        policy: policy.to_string(),
        seed: engine.config.seed,
        jobs: job_reports,
        cluster_minutes,
        mean_lost_utility,
        mean_lost_effective_utility,
        cluster_violation_rate,
        degraded_cycles,
        starved_upscales,
    }
}

fn minute_record(
    f: &FinalizedMinute,
    job: &JobSpec,
    params: &UtilityParams,
    penalty: &PenaltySchedule,
) -> MinuteRecord {
    let mut all = f.latencies.clone();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p99 = percentile(&all, job.slo.percentile);
    let served: Vec<f64> = all.iter().copied().filter(|l| l.is_finite()).collect();
    let p99_served = percentile(&served, job.slo.percentile);
    let satisfied = all.iter().filter(|&&l| l <= job.slo.target_latency).count() as u64;

    let utility = match p99 {
        None => 1.0,
        Some(l) => utility_relaxed(l, &job.slo, params),
    };
    let drops = f.tail_drops + f.explicit_drops;
    let recorded = all.len() as u64;
    let drop_fraction = if recorded == 0 {
        0.0
    } else {
        drops as f64 / recorded as f64
    };
    let served_utility = match p99_served {
        None => {
            if recorded == 0 {
                1.0
            } else {
                0.0
            }
        }
        Some(l) => utility_relaxed(l, &job.slo, params),
    };
    MinuteRecord {
        minute: f.minute,
        arrivals: f.arrivals,
        tail_drops: f.tail_drops,
        explicit_drops: f.explicit_drops,
        recorded,
        p99,
        p99_served,
        satisfied,
        utility,
        effective_utility: effective_utility(served_utility, drop_fraction, penalty),
        planned_replicas: f.planned_replicas,
        ready_replicas: f.ready_replicas,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentile() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(percentile(&v, 0.99), Some(99.0));
        assert_eq!(percentile(&v, 0.5), Some(50.0));
        assert_eq!(percentile(&v, 1.0), Some(100.0));
        assert_eq!(percentile(&[], 0.99), None);
        // One drop in a hundred: p99 lands on the finite side.
        let mut with_drop = v.clone();
        with_drop[99] = f64::INFINITY;
        assert_eq!(percentile(&with_drop, 0.99), Some(99.0));
        // Two drops: p99 hits infinity.
        with_drop[98] = f64::INFINITY;
        assert_eq!(percentile(&with_drop, 0.99), Some(f64::INFINITY));
    }
}
