//! The three-stage periodic planner and its hybrid reactive companion.
//!
//! Every long period the planner (1) forecasts each job's arrival rates
//! over the horizon and turns them into sampled per-step loads, (2) solves
//! the relaxed multi-tenant objective under the cluster limits —
//! hierarchically grouped when the job count is large — and integerizes
//! the result, then (3) shrinks overprovisioned jobs back while the
//! predicted cluster objective is unchanged. Candidate capacity during the
//! first cold-start step of the window is capped at what is ready now, so
//! plans account for replica startup.
//!
//! Between long cycles a short-term loop adds one replica to any job whose
//! observed latency has violated its SLO continuously for the trigger
//! duration. It never scales down; the next long cycle reclaims slack.

use faro_core::{
    hierarchical_solve, integerize, sample_trajectories, AllocationPlan, ClusterObjectiveSpec,
    ColdStart, JobLoad, JobSpec, LatencyModel, ObjectiveEvaluator, ObjectiveForm, ObjectiveKind,
    ProbabilisticForecast, RateHistory, RatePredictor, SolverConfig,
};
use serde::{Deserialize, Serialize};

use crate::engine::derive_seed;
use crate::policy::{ClusterState, PlanUpdate, PolicyCtx, ScalingPolicy, StreakTracker};

/// Feature toggles for ablation runs; everything on in production.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Relaxed objective (off = precise step utility and hard estimates).
    pub relaxation: bool,
    /// M/D/c latency estimation (off = pessimistic upper bound).
    pub mdc: bool,
    /// Forecasting (off = plan against the last observed rate).
    pub prediction: bool,
    /// Probabilistic sampling (off = single point trajectory).
    pub probabilistic: bool,
    /// Short-term reactive loop.
    pub hybrid: bool,
    /// Post-solve shrinking.
    pub shrink: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            relaxation: true,
            mdc: true,
            prediction: true,
            probabilistic: true,
            hybrid: true,
            shrink: true,
        }
    }
}

/// Iteratively trims replica counts of jobs already at predicted utility 1
/// (in job order) while the cluster objective stays unchanged within 1e-9.
/// A no-op when no job is meeting its SLO.
pub fn shrink_plan(plan: &AllocationPlan, evaluator: &ObjectiveEvaluator<'_>) -> AllocationPlan {
    let mut out = plan.clone();
    let base = evaluator.value(&out);
    for i in 0..out.len() {
        let u = evaluator.job_utility(i, out.replicas[i], out.drop_rates[i]);
        if u < 1.0 - 1e-12 {
            continue;
        }
        while out.replicas[i] > 1.0 {
            out.replicas[i] -= 1.0;
            if (evaluator.value(&out) - base).abs() > 1e-9 {
                out.replicas[i] += 1.0;
                break;
            }
        }
    }
    out
}

/// `shrink_plan` against a fresh evaluator; the shape the rest of the
/// pipeline uses when no cold-start context is needed.
pub fn shrink(
    plan: &AllocationPlan,
    jobs: &[JobSpec],
    loads: &[JobLoad],
    spec: &ClusterObjectiveSpec,
) -> AllocationPlan {
    shrink_plan(plan, &ObjectiveEvaluator::new(jobs, loads, spec))
}

/// The SLO-aware multi-tenant policy.
pub struct FaroPolicy {
    kind: ObjectiveKind,
    ablation: AblationFlags,
    predictors: Vec<Box<dyn RatePredictor>>,
    solver: SolverConfig,
    streaks: Vec<StreakTracker>,
    cycle: u64,
    degraded_cycles: u64,
    starved: u64,
}

impl FaroPolicy {
    pub fn new(
        kind: ObjectiveKind,
        ablation: AblationFlags,
        predictors: Vec<Box<dyn RatePredictor>>,
        solver: SolverConfig,
    ) -> Self {
        let n = predictors.len();
        Self {
            kind,
            ablation,
            predictors,
            solver,
            streaks: vec![StreakTracker::default(); n],
            cycle: 0,
            degraded_cycles: 0,
            starved: 0,
        }
    }

    pub fn degraded_cycles(&self) -> u64 {
        self.degraded_cycles
    }

    fn objective_spec(&self, ctx: &PolicyCtx<'_>) -> ClusterObjectiveSpec {
        let form = if self.ablation.relaxation {
            ObjectiveForm::Relaxed
        } else {
            ObjectiveForm::Precise
        };
        let mut spec = ClusterObjectiveSpec::new(self.kind, form);
        spec.latency_model = if self.ablation.mdc {
            LatencyModel::Mdc
        } else {
            LatencyModel::UpperBound
        };
        let _ = ctx;
        spec
    }

    /// Forecast one job and expand it into per-step load samples (req/s).
    fn job_load(
        &mut self,
        idx: usize,
        state: &ClusterState,
        ctx: &PolicyCtx<'_>,
        seed: u64,
    ) -> JobLoad {
        let horizon = ctx.config.horizon.max(1);
        let history = RateHistory::new(state.jobs[idx].rate_history.clone());
        let mut forecast: ProbabilisticForecast = if self.ablation.prediction {
            self.predictors[idx].forecast(&history, state.now_minute, horizon)
        } else {
            let last = history.rates.last().copied().unwrap_or(0.0);
            ProbabilisticForecast::point(vec![last; horizon])
        };
        let samples = if self.ablation.probabilistic {
            ctx.config.sample_count.max(1)
        } else {
            forecast.stds.iter_mut().for_each(|s| *s = 0.0);
            1
        };
        let trajectories = sample_trajectories(&forecast, samples, derive_seed(seed, 0x7A, idx as u64, 0));
        // Transpose to [step][sample] and convert per-minute to per-second.
        let mut steps = vec![Vec::with_capacity(samples); horizon];
        for traj in &trajectories {
            for (h, &rate) in traj.iter().enumerate() {
                steps[h].push(rate / 60.0);
            }
        }
        JobLoad { steps }
    }

    /// Stages 1-3 of the periodic planner.
    fn plan_long_term(&mut self, state: &ClusterState, ctx: &PolicyCtx<'_>) -> PlanUpdate {
        let n = ctx.jobs.len();
        let cycle_seed = derive_seed(ctx.seed, 0xFA, self.cycle, 0);
        let loads: Vec<JobLoad> = (0..n)
            .map(|i| self.job_load(i, state, ctx, cycle_seed))
            .collect();
        let spec = self.objective_spec(ctx);
        let interval = 60.0;
        let cold_steps = (ctx.config.cold_start_delay / interval).ceil() as usize;
        let cold: Vec<ColdStart> = state
            .jobs
            .iter()
            .map(|j| ColdStart {
                ready_replicas: j.ready as f64,
                cold_steps,
            })
            .collect();
        let initial = AllocationPlan {
            replicas: state.jobs.iter().map(|j| j.planned.max(1) as f64).collect(),
            drop_rates: vec![0.0; n],
        };

        let solver = SolverConfig {
            seed: cycle_seed,
            ..self.solver
        };
        let outcome = hierarchical_solve(
            ctx.jobs,
            &loads,
            ctx.limits,
            &spec,
            &initial,
            Some(&cold),
            &solver,
        );
        let degraded = outcome.degraded;

        let evaluator = ObjectiveEvaluator::new(ctx.jobs, &loads, &spec).with_cold_start(&cold);
        let integer = integerize(&outcome.plan, ctx.jobs, ctx.limits, |p| evaluator.value(p));
        let shrunk = if self.ablation.shrink {
            shrink_plan(&integer, &evaluator)
        } else {
            integer
        };

        if degraded {
            self.degraded_cycles += 1;
        }
        let drop_rates = if self.kind.optimizes_drops() {
            shrunk.drop_rates.clone()
        } else {
            vec![0.0; n]
        };
        PlanUpdate {
            replicas: shrunk.replica_counts(),
            drop_rates,
            degraded,
        }
    }

    /// Additive reactive upscale: +1 for each job violating continuously
    /// for the trigger duration, capacity permitting. Never downsizes.
    fn short_term_react(&mut self, state: &ClusterState, ctx: &PolicyCtx<'_>) -> Option<PlanUpdate> {
        let mut replicas: Vec<u32> = state.jobs.iter().map(|j| j.planned).collect();
        let mut changed = false;
        for (i, job) in state.jobs.iter().enumerate() {
            let violating = job
                .window_latency
                .map(|l| l > ctx.jobs[i].slo.target_latency);
            self.streaks[i].observe(state.now, violating);
        }
        for i in 0..state.jobs.len() {
            if self.streaks[i].violating_for(state.now) >= ctx.config.upscale_trigger {
                let cpu_used: f64 = ctx
                    .jobs
                    .iter()
                    .zip(&replicas)
                    .map(|(j, &x)| x as f64 * j.cpu_per_replica)
                    .sum();
                let mem_used: f64 = ctx
                    .jobs
                    .iter()
                    .zip(&replicas)
                    .map(|(j, &x)| x as f64 * j.mem_per_replica)
                    .sum();
                let fits = ctx.limits.max_cpu - cpu_used >= ctx.jobs[i].cpu_per_replica
                    && ctx.limits.max_mem - mem_used >= ctx.jobs[i].mem_per_replica;
                if fits {
                    replicas[i] += 1;
                    changed = true;
                    self.streaks[i].reset();
                } else {
                    self.starved += 1;
                }
            }
        }
        changed.then(|| PlanUpdate::replicas_only(replicas))
    }
}

impl ScalingPolicy for FaroPolicy {
    fn name(&self) -> String {
        match self.kind {
            ObjectiveKind::Sum => "faro-sum",
            ObjectiveKind::Fair => "faro-fair",
            ObjectiveKind::FairSum => "faro-fairsum",
            ObjectiveKind::PenaltySum => "faro-penaltysum",
            ObjectiveKind::PenaltyFairSum => "faro-penaltyfairsum",
        }
        .to_string()
    }

    fn on_long_tick(&mut self, state: &ClusterState, ctx: &PolicyCtx<'_>) -> Option<PlanUpdate> {
        let update = self.plan_long_term(state, ctx);
        self.cycle += 1;
        Some(update)
    }

    fn on_short_tick(&mut self, state: &ClusterState, ctx: &PolicyCtx<'_>) -> Option<PlanUpdate> {
        if !self.ablation.hybrid {
            return None;
        }
        self.short_term_react(state, ctx)
    }

    fn starved_upscales(&self) -> u64 {
        self.starved
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use faro_core::{ResourceLimits, Slo};

    fn job(id: &str) -> JobSpec {
        JobSpec {
            id: id.into(),
            service_time: 0.18,
            slo: Slo::new(0.72, 0.99).unwrap(),
            priority: 1.0,
            cpu_per_replica: 1.0,
            mem_per_replica: 1e9,
        }
    }

    fn spec() -> ClusterObjectiveSpec {
        ClusterObjectiveSpec::new(ObjectiveKind::Sum, ObjectiveForm::Relaxed)
    }

    #[test]
    fn shrink_trims_overprovisioned_to_minimal() {
        let jobs = vec![job("a")];
        // 6 replicas keep utility 1 for this load; 10 is oversized.
        let loads = vec![JobLoad::constant(20.0, 3)];
        let s = spec();
        let plan = AllocationPlan {
            replicas: vec![10.0],
            drop_rates: vec![0.0],
        };
        let shrunk = shrink(&plan, &jobs, &loads, &s);
        // Find the scan minimum with utility 1.
        let ev = ObjectiveEvaluator::new(&jobs, &loads, &s);
        let mut minimal = 1.0;
        for x in (1..=10).rev() {
            if ev.job_utility(0, x as f64, 0.0) >= 1.0 - 1e-12 {
                minimal = x as f64;
            } else {
                break;
            }
        }
        assert_eq!(shrunk.replicas[0], minimal);
        // Idempotent.
        let again = shrink(&shrunk, &jobs, &loads, &s);
        assert_eq!(again, shrunk);
    }

    #[test]
    fn shrink_skips_unsatisfied_jobs_and_floor() {
        let jobs = vec![job("a"), job("b")];
        let loads = vec![JobLoad::constant(200.0, 2), JobLoad::constant(0.0, 2)];
        let s = spec();
        let plan = AllocationPlan {
            replicas: vec![3.0, 1.0],
            drop_rates: vec![0.0, 0.0],
        };
        let shrunk = shrink(&plan, &jobs, &loads, &s);
        // Job a is hopelessly overloaded (utility < 1): untouched. Job b is
        // at the floor: untouched.
        assert_eq!(shrunk.replicas, vec![3.0, 1.0]);
    }

    #[test]
    fn shrink_changes_nothing_when_all_below_slo() {
        let jobs = vec![job("a"), job("b")];
        let loads = vec![JobLoad::constant(300.0, 1), JobLoad::constant(300.0, 1)];
        let s = spec();
        let plan = AllocationPlan {
            replicas: vec![4.0, 4.0],
            drop_rates: vec![0.0, 0.0],
        };
        assert_eq!(shrink(&plan, &jobs, &loads, &s), plan);
    }
}
