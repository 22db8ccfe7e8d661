//! Scaling policy interface and the baseline policies.
//!
//! Baselines mirror the usual industry heuristics: a static fair share, a
//! latency-proportional one-shot scaler, additive increase / additive
//! decrease, and an independent throughput-based proactive sizer. All
//! reactive policies share the same sustained-violation triggers
//! (aggressive 30 s upscale, conservative 5 min downscale).

use faro_core::{JobSpec, ProbabilisticForecast, RateHistory, RatePredictor, ResourceLimits};
use thiserror::Error;

use crate::config::AutoscalerConfig;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("infeasible fair share: capacity {capacity} replicas for {jobs} jobs")]
    InfeasibleFairShare { capacity: u32, jobs: usize },
}

/// Per-job view handed to policies at each tick.
#[derive(Debug, Clone)]
pub struct JobState {
    pub ready: u32,
    pub pending: u32,
    pub planned: u32,
    /// Trailing arrival counts, requests per minute.
    pub rate_history: Vec<f64>,
    /// SLO-percentile latency over the recent reactive window; drops count
    /// at infinity. None when the window saw no traffic.
    pub window_latency: Option<f64>,
    pub mean_service_time: f64,
}

#[derive(Debug, Clone)]
pub struct ClusterState {
    pub now: f64,
    /// Index of the last fully observed minute (i.e. rate_history length
    /// in the job timeline).
    pub now_minute: usize,
    pub jobs: Vec<JobState>,
}

/// Absolute allocation a policy wants applied.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanUpdate {
    pub replicas: Vec<u32>,
    pub drop_rates: Vec<f64>,
    /// The planner fell back to the current allocation this cycle.
    pub degraded: bool,
}

impl PlanUpdate {
    pub fn replicas_only(replicas: Vec<u32>) -> Self {
        let n = replicas.len();
        Self {
            replicas,
            drop_rates: vec![0.0; n],
            degraded: false,
        }
    }
}

pub struct PolicyCtx<'a> {
    pub jobs: &'a [JobSpec],
    pub limits: &'a ResourceLimits,
    pub config: &'a AutoscalerConfig,
    /// Trial seed; policies derive their own streams from it.
    pub seed: u64,
}

pub trait ScalingPolicy: Send {
    fn name(&self) -> String;
    fn on_long_tick(&mut self, state: &ClusterState, ctx: &PolicyCtx<'_>) -> Option<PlanUpdate>;
    fn on_short_tick(&mut self, _state: &ClusterState, _ctx: &PolicyCtx<'_>) -> Option<PlanUpdate> {
        None
    }
    /// Short-term upscales denied for lack of headroom (reporting only).
    fn starved_upscales(&self) -> u64 {
        0
    }
}

/// Tracks how long a job has been continuously violating / satisfying its
/// SLO, sampled at short ticks.
#[derive(Debug, Clone, Default)]
pub struct StreakTracker {
    violating_since: Option<f64>,
    satisfied_since: Option<f64>,
}

impl StreakTracker {
    /// `violating` is None when the window had no traffic (counts as
    /// satisfied: an idle job meets its SLO).
    pub fn observe(&mut self, now: f64, violating: Option<bool>) {
        if violating.unwrap_or(false) {
            self.violating_since.get_or_insert(now);
            self.satisfied_since = None;
        } else {
            self.satisfied_since.get_or_insert(now);
            self.violating_since = None;
        }
    }

    pub fn violating_for(&self, now: f64) -> f64 {
        self.violating_since.map_or(0.0, |t| now - t)
    }

    pub fn satisfied_for(&self, now: f64) -> f64 {
        self.satisfied_since.map_or(0.0, |t| now - t)
    }

    pub fn reset(&mut self) {
        self.violating_since = None;
        self.satisfied_since = None;
    }
}

fn violating(state: &JobState, job: &JobSpec) -> Option<bool> {
    state
        .window_latency
        .map(|l| l > job.slo.target_latency)
}

/// Replicas of `job` that still fit in the remaining headroom.
fn fits(headroom_cpu: f64, headroom_mem: f64, job: &JobSpec) -> u32 {
    let by_cpu = (headroom_cpu / job.cpu_per_replica).floor();
    let by_mem = (headroom_mem / job.mem_per_replica).floor();
    by_cpu.min(by_mem).max(0.0) as u32
}

fn headroom(jobs: &[JobSpec], replicas: &[u32], limits: &ResourceLimits) -> (f64, f64) {
    let cpu: f64 = jobs
        .iter()
        .zip(replicas)
        .map(|(j, &x)| x as f64 * j.cpu_per_replica)
        .sum();
    let mem: f64 = jobs
        .iter()
        .zip(replicas)
        .map(|(j, &x)| x as f64 * j.mem_per_replica)
        .sum();
    (limits.max_cpu - cpu, limits.max_mem - mem)
}

// ── FairShare ───────────────────────────────────────────────────────────

/// Static equal split of the cluster, no autoscaling.
pub struct FairSharePolicy {
    shares: Vec<u32>,
    applied: bool,
}

impl FairSharePolicy {
    pub fn new(jobs: &[JobSpec], limits: &ResourceLimits) -> Result<Self, PolicyError> {
        let n = jobs.len().max(1);
        let shares: Vec<u32> = jobs
            .iter()
            .map(|j| {
                let by_cpu = (limits.max_cpu / (n as f64 * j.cpu_per_replica)).floor();
                let by_mem = (limits.max_mem / (n as f64 * j.mem_per_replica)).floor();
                by_cpu.min(by_mem).max(0.0) as u32
            })
            .collect();
        if let Some(&zero) = shares.iter().find(|&&s| s < 1) {
            let _ = zero;
            let capacity = jobs
                .first()
                .map(|j| (limits.max_cpu / j.cpu_per_replica) as u32)
                .unwrap_or(0);
            return Err(PolicyError::InfeasibleFairShare {
                capacity,
                jobs: jobs.len(),
            });
        }
        Ok(Self {
            shares,
            applied: false,
        })
    }
}

impl ScalingPolicy for FairSharePolicy {
    fn name(&self) -> String {
        "fairshare".into()
    }

    fn on_long_tick(&mut self, _state: &ClusterState, _ctx: &PolicyCtx<'_>) -> Option<PlanUpdate> {
        if self.applied {
            return None;
        }
        self.applied = true;
        Some(PlanUpdate::replicas_only(self.shares.clone()))
    }
}

// ── Oneshot ─────────────────────────────────────────────────────────────

/// Scales a violating job straight to `ceil(x * latency / slo)` after a
/// sustained violation, and back down by the same ratio after a sustained
/// quiet period. Grants are clipped to headroom in job order.
pub struct OneshotPolicy {
    streaks: Vec<StreakTracker>,
}

impl OneshotPolicy {
    pub fn new(job_count: usize) -> Self {
        Self {
            streaks: vec![StreakTracker::default(); job_count],
        }
    }
}

impl ScalingPolicy for OneshotPolicy {
    fn name(&self) -> String {
        "oneshot".into()
    }

    fn on_long_tick(&mut self, _state: &ClusterState, _ctx: &PolicyCtx<'_>) -> Option<PlanUpdate> {
        None
    }

    fn on_short_tick(&mut self, state: &ClusterState, ctx: &PolicyCtx<'_>) -> Option<PlanUpdate> {
        let mut replicas: Vec<u32> = state.jobs.iter().map(|j| j.planned).collect();
        let mut changed = false;
        for (i, job) in state.jobs.iter().enumerate() {
            self.streaks[i].observe(state.now, violating(job, &ctx.jobs[i]));
        }
        // Downscales first: they free headroom for this tick's grants.
        for (i, job) in state.jobs.iter().enumerate() {
            if self.streaks[i].satisfied_for(state.now) >= ctx.config.downscale_trigger
                && job.planned > 1
            {
                let ratio = match job.window_latency {
                    Some(l) if l.is_finite() => (l / ctx.jobs[i].slo.target_latency).min(1.0),
                    // Idle or clean window: collapse to the floor.
                    _ => 0.0,
                };
                let target = ((job.planned as f64 * ratio).ceil() as u32).max(1);
                if target < job.planned {
                    replicas[i] = target;
                    changed = true;
                    self.streaks[i].reset();
                }
            }
        }
        for (i, job) in state.jobs.iter().enumerate() {
            if self.streaks[i].violating_for(state.now) >= ctx.config.upscale_trigger {
                let desired = match job.window_latency {
                    Some(l) if l.is_finite() => {
                        ((job.planned as f64) * (l / ctx.jobs[i].slo.target_latency)).ceil() as u32
                    }
                    // Drops in the window: grab whatever fits.
                    Some(_) => u32::MAX,
                    None => job.planned,
                };
                if desired > replicas[i] {
                    let (hc, hm) = headroom(ctx.jobs, &replicas, ctx.limits);
                    let grant = (desired - replicas[i]).min(fits(hc, hm, &ctx.jobs[i]));
                    if grant > 0 {
                        replicas[i] += grant;
                        changed = true;
                        self.streaks[i].reset();
                    }
                }
            }
        }
        changed.then(|| PlanUpdate::replicas_only(replicas))
    }
}

// ── AIAD ────────────────────────────────────────────────────────────────

/// Additive increase, additive decrease: one replica per sustained
/// violation, minus one per sustained satisfaction.
pub struct AiadPolicy {
    streaks: Vec<StreakTracker>,
}

impl AiadPolicy {
    pub fn new(job_count: usize) -> Self {
        Self {
            streaks: vec![StreakTracker::default(); job_count],
        }
    }
}

impl ScalingPolicy for AiadPolicy {
    fn name(&self) -> String {
        "aiad".into()
    }

    fn on_long_tick(&mut self, _state: &ClusterState, _ctx: &PolicyCtx<'_>) -> Option<PlanUpdate> {
        None
    }

    fn on_short_tick(&mut self, state: &ClusterState, ctx: &PolicyCtx<'_>) -> Option<PlanUpdate> {
        let mut replicas: Vec<u32> = state.jobs.iter().map(|j| j.planned).collect();
        let mut changed = false;
        for (i, job) in state.jobs.iter().enumerate() {
            self.streaks[i].observe(state.now, violating(job, &ctx.jobs[i]));
        }
        for (i, job) in state.jobs.iter().enumerate() {
            if self.streaks[i].satisfied_for(state.now) >= ctx.config.downscale_trigger
                && job.planned > 1
            {
                replicas[i] -= 1;
                changed = true;
                self.streaks[i].reset();
            }
        }
        for i in 0..state.jobs.len() {
            if self.streaks[i].violating_for(state.now) >= ctx.config.upscale_trigger {
                let (hc, hm) = headroom(ctx.jobs, &replicas, ctx.limits);
                if fits(hc, hm, &ctx.jobs[i]) >= 1 {
                    replicas[i] += 1;
                    changed = true;
                    self.streaks[i].reset();
                }
            }
        }
        changed.then(|| PlanUpdate::replicas_only(replicas))
    }
}

// ── Mark-style proactive sizing ─────────────────────────────────────────

/// Sizes each job independently from the forecast peak and the replica's
/// maximum throughput `1/p`, clipped to capacity in job order.
pub struct MarkPolicy {
    predictors: Vec<Box<dyn RatePredictor>>,
}

impl MarkPolicy {
    pub fn new(predictors: Vec<Box<dyn RatePredictor>>) -> Self {
        Self { predictors }
    }
}

impl ScalingPolicy for MarkPolicy {
    fn name(&self) -> String {
        "mark".into()
    }

    fn on_long_tick(&mut self, state: &ClusterState, ctx: &PolicyCtx<'_>) -> Option<PlanUpdate> {
        let mut replicas = vec![0u32; state.jobs.len()];
        for (i, job) in state.jobs.iter().enumerate() {
            let history = RateHistory::new(job.rate_history.clone());
            let forecast: ProbabilisticForecast =
                self.predictors[i].forecast(&history, state.now_minute, ctx.config.horizon);
            let peak_per_min = forecast
                .means
                .iter()
                .copied()
                .fold(0.0f64, f64::max)
                .max(job.rate_history.last().copied().unwrap_or(0.0));
            let peak_per_sec = peak_per_min / 60.0;
            let want = (peak_per_sec * ctx.jobs[i].service_time).ceil() as u32;
            // Clip in job order: earlier jobs take what they ask for.
            let (hc, hm) = headroom(ctx.jobs, &replicas, ctx.limits);
            let reserve_floor: f64 = ctx.jobs[i + 1..]
                .iter()
                .map(|j| j.cpu_per_replica)
                .sum::<f64>();
            let available = fits((hc - reserve_floor).max(0.0), hm, &ctx.jobs[i]).max(1);
            replicas[i] = want.clamp(1, available);
        }
        Some(PlanUpdate::replicas_only(replicas))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use faro_core::Slo;

    fn jobs(n: usize) -> Vec<JobSpec> {
        (0..n)
            .map(|i| JobSpec {
                id: format!("j{i}"),
                service_time: 0.18,
                slo: Slo::new(0.72, 0.99).unwrap(),
                priority: 1.0,
                cpu_per_replica: 1.0,
                mem_per_replica: 1e9,
            })
            .collect()
    }

    fn limits(cpu: f64) -> ResourceLimits {
        ResourceLimits {
            max_cpu: cpu,
            max_mem: cpu * 1e9,
        }
    }

    fn state(jobs: usize, planned: u32, latency: Option<f64>) -> ClusterState {
        ClusterState {
            now: 100.0,
            now_minute: 2,
            jobs: (0..jobs)
                .map(|_| JobState {
                    ready: planned,
                    pending: 0,
                    planned,
                    rate_history: vec![60.0, 60.0],
                    window_latency: latency,
                    mean_service_time: 0.18,
                })
                .collect(),
        }
    }

    #[test]
    fn fair_share_splits_floor() {
        let j = jobs(10);
        let p = FairSharePolicy::new(&j, &limits(32.0)).unwrap();
        assert_eq!(p.shares, vec![3; 10]);
        let p = FairSharePolicy::new(&j, &limits(16.0)).unwrap();
        assert_eq!(p.shares, vec![1; 10]);
        let j36 = jobs(36);
        let p = FairSharePolicy::new(&j36, &limits(36.0)).unwrap();
        assert_eq!(p.shares, vec![1; 36]);
        assert!(FairSharePolicy::new(&jobs(10), &limits(8.0)).is_err());
    }

    #[test]
    fn aiad_increments_after_trigger_only() {
        let j = jobs(1);
        let lim = limits(8.0);
        let cfg = AutoscalerConfig::default();
        let mut p = AiadPolicy::new(1);
        let ctx = PolicyCtx {
            jobs: &j,
            limits: &lim,
            config: &cfg,
            seed: 0,
        };
        // First violating observation arms the streak, no action yet.
        let mut s = state(1, 2, Some(1.5));
        s.now = 0.0;
        assert!(p.on_short_tick(&s, &ctx).is_none());
        // 30 seconds later the trigger fires, exactly +1.
        s.now = 30.0;
        let update = p.on_short_tick(&s, &ctx).unwrap();
        assert_eq!(update.replicas, vec![3]);
        // Streak was reset: the next tick doesn't fire again.
        s.now = 40.0;
        assert!(p.on_short_tick(&s, &ctx).is_none());
    }

    #[test]
    fn aiad_idle_decays_to_one() {
        let j = jobs(1);
        let lim = limits(8.0);
        let cfg = AutoscalerConfig::default();
        let mut p = AiadPolicy::new(1);
        let ctx = PolicyCtx {
            jobs: &j,
            limits: &lim,
            config: &cfg,
            seed: 0,
        };
        let mut s = state(1, 3, None);
        s.now = 0.0;
        assert!(p.on_short_tick(&s, &ctx).is_none());
        s.now = 300.0;
        let update = p.on_short_tick(&s, &ctx).unwrap();
        assert_eq!(update.replicas, vec![2]);
    }

    #[test]
    fn oneshot_ratio_scaling() {
        let j = jobs(1);
        let lim = limits(16.0);
        let cfg = AutoscalerConfig::default();
        let mut p = OneshotPolicy::new(1);
        let ctx = PolicyCtx {
            jobs: &j,
            limits: &lim,
            config: &cfg,
            seed: 0,
        };
        // Latency at twice the SLO and four replicas: wants eight.
        let mut s = state(1, 4, Some(1.44));
        s.now = 0.0;
        assert!(p.on_short_tick(&s, &ctx).is_none());
        s.now = 30.0;
        let update = p.on_short_tick(&s, &ctx).unwrap();
        assert_eq!(update.replicas, vec![8]);
        // Satisfied latency never upscales.
        let mut p2 = OneshotPolicy::new(1);
        let mut s2 = state(1, 4, Some(0.3));
        s2.now = 0.0;
        assert!(p2.on_short_tick(&s2, &ctx).is_none());
        s2.now = 60.0;
        assert!(p2.on_short_tick(&s2, &ctx).is_none());
    }

    #[test]
    fn mark_throughput_arithmetic() {
        // Forecast peak of 2400 req/min = 40 req/s at p=0.15 -> 6 replicas.
        struct Fixed;
        impl RatePredictor for Fixed {
            fn forecast(
                &mut self,
                _history: &RateHistory,
                _now_step: usize,
                horizon: usize,
            ) -> ProbabilisticForecast {
                ProbabilisticForecast::point(vec![2400.0; horizon])
            }
        }
        let mut j = jobs(1);
        j[0].service_time = 0.15;
        let lim = limits(16.0);
        let cfg = AutoscalerConfig::default();
        let mut p = MarkPolicy::new(vec![Box::new(Fixed)]);
        let ctx = PolicyCtx {
            jobs: &j,
            limits: &lim,
            config: &cfg,
            seed: 0,
        };
        let mut s = state(1, 1, None);
        s.jobs[0].rate_history = vec![100.0; 5];
        let update = p.on_long_tick(&s, &ctx).unwrap();
        assert_eq!(update.replicas, vec![6]);
    }
}
