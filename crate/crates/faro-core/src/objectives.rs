//! Cluster objective functions over per-job allocations.
//!
//! Five administrator-selectable objectives combine per-job utilities:
//! a priority-weighted sum, a max-min fairness term, their hybrid, and
//! drop-penalty variants of the sum and the hybrid. Each objective exists
//! in a precise form (step utility, hard M/D/c estimate) and a relaxed
//! form (inverse-power utility, capped-utilization latency, interpolated
//! penalty) that local solvers can actually climb.
//!
//! A job's predicted utility is the average utility across every sampled
//! rate trajectory and horizon step, so load fluctuation captured by the
//! probabilistic forecast flows straight into the objective instead of
//! being averaged away in rate space.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::{mdc_latency, relaxed_mdc_latency, QueueInput, RelaxationKnobs};
use crate::utility::{
    penalty_multiplier, utility_original, utility_relaxed, PenaltySchedule, Slo, UtilityParams,
};

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("plan has {plan} jobs but {jobs} job specs were given")]
    DimensionMismatch { plan: usize, jobs: usize },
}

/// One inference job: its service profile, SLO, priority, and per-replica
/// resource footprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub id: String,
    /// Mean per-request processing time on one replica, seconds.
    pub service_time: f64,
    pub slo: Slo,
    /// Non-negative priority weight, 1 by default.
    pub priority: f64,
    /// vCPUs consumed by one replica.
    pub cpu_per_replica: f64,
    /// Memory consumed by one replica, bytes.
    pub mem_per_replica: f64,
}

/// Total resources the cluster can hand out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub max_cpu: f64,
    pub max_mem: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// Maximize the priority-weighted sum of utilities.
    Sum,
    /// Minimize the spread between the best and worst job utility.
    Fair,
    /// Weighted sum minus `gamma` times the utility spread.
    FairSum,
    /// Weighted sum of effective (drop-penalized) utilities.
    PenaltySum,
    /// Effective-utility sum minus `gamma` times the effective spread.
    PenaltyFairSum,
}

impl ObjectiveKind {
    /// Penalty kinds optimize per-job drop rates; the others pin drops to 0.
    pub fn optimizes_drops(&self) -> bool {
        matches!(self, ObjectiveKind::PenaltySum | ObjectiveKind::PenaltyFairSum)
    }
}

/// Precise objectives keep the step utility and the hard (infinite past
/// instability) latency estimate; relaxed objectives swap in the smooth
/// counterparts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveForm {
    Precise,
    Relaxed,
}

/// Which latency estimator backs predicted utilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatencyModel {
    /// M/D/c queueing estimate (default).
    Mdc,
    /// Pessimistic back-to-back bound; kept for ablation runs.
    UpperBound,
}

/// How sampled trajectories enter a job's predicted utility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadAggregation {
    /// Average the utility over every sample and step (default): keeps
    /// fluctuation sensitivity without collapsing rates.
    MeanUtility,
    /// Worst-case alternative: plan against each step's maximum sampled
    /// rate.
    PeakRate,
}

/// Everything needed to evaluate one of the five cluster objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterObjectiveSpec {
    pub kind: ObjectiveKind,
    /// Fairness weight; defaults to the job count, which normalizes the
    /// sum and spread terms against each other.
    pub gamma: Option<f64>,
    pub penalty: PenaltySchedule,
    pub utility: UtilityParams,
    pub knobs: RelaxationKnobs,
    pub form: ObjectiveForm,
    pub latency_model: LatencyModel,
    pub load_aggregation: LoadAggregation,
}

impl ClusterObjectiveSpec {
    pub fn new(kind: ObjectiveKind, form: ObjectiveForm) -> Self {
        Self {
            kind,
            gamma: None,
            penalty: PenaltySchedule::credit_bands(matches!(form, ObjectiveForm::Relaxed)),
            utility: UtilityParams::default(),
            knobs: RelaxationKnobs::default(),
            form,
            latency_model: LatencyModel::Mdc,
            load_aggregation: LoadAggregation::MeanUtility,
        }
    }

    pub fn gamma_for(&self, job_count: usize) -> f64 {
        self.gamma.unwrap_or(job_count as f64)
    }

    /// The same spec with the other form, penalty smoothing switched to
    /// match.
    pub fn with_form(&self, form: ObjectiveForm) -> Self {
        let mut spec = self.clone();
        spec.form = form;
        spec.penalty.relaxed = matches!(form, ObjectiveForm::Relaxed);
        spec
    }
}

/// Per-job replica counts and drop rates. Replicas are continuous during
/// solving and integral in finalized plans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub replicas: Vec<f64>,
    pub drop_rates: Vec<f64>,
}

impl AllocationPlan {
    pub fn uniform(jobs: usize, replicas: f64) -> Self {
        Self {
            replicas: vec![replicas; jobs],
            drop_rates: vec![0.0; jobs],
        }
    }

    pub fn len(&self) -> usize {
        self.replicas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicas.is_empty()
    }

    /// Replica counts rounded for execution. Valid on finalized plans.
    pub fn replica_counts(&self) -> Vec<u32> {
        self.replicas.iter().map(|&x| x.round().max(1.0) as u32).collect()
    }

    pub fn total_cpu(&self, jobs: &[JobSpec]) -> f64 {
        self.replicas
            .iter()
            .zip(jobs)
            .map(|(&x, j)| x * j.cpu_per_replica)
            .sum()
    }

    pub fn total_mem(&self, jobs: &[JobSpec]) -> f64 {
        self.replicas
            .iter()
            .zip(jobs)
            .map(|(&x, j)| x * j.mem_per_replica)
            .sum()
    }
}

/// Sampled future load for one job: `steps[t][s]` is trajectory `s`'s rate
/// at horizon step `t`, in requests per second.
#[derive(Debug, Clone, PartialEq)]
pub struct JobLoad {
    pub steps: Vec<Vec<f64>>,
}

impl JobLoad {
    /// A single flat trajectory, handy in tests and snapshots.
    pub fn constant(rate_per_sec: f64, steps: usize) -> Self {
        Self {
            steps: vec![vec![rate_per_sec]; steps.max(1)],
        }
    }

    pub fn mean_rate(&self) -> f64 {
        let (sum, n) = self.steps.iter().flatten().fold((0.0, 0usize), |(s, n), &r| (s + r, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Replica capacity during the cold-start prefix of the planning window:
/// newly requested replicas only serve after the cold-start delay, so the
/// first `cold_steps` steps are capped at what is ready right now.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColdStart {
    pub ready_replicas: f64,
    pub cold_steps: usize,
}

/// Evaluates cluster objectives for candidate plans against fixed jobs,
/// sampled loads, and an optional per-job cold-start profile.
pub struct ObjectiveEvaluator<'a> {
    pub jobs: &'a [JobSpec],
    pub loads: &'a [JobLoad],
    pub spec: &'a ClusterObjectiveSpec,
    pub cold_start: Option<&'a [ColdStart]>,
}

impl<'a> ObjectiveEvaluator<'a> {
    pub fn new(jobs: &'a [JobSpec], loads: &'a [JobLoad], spec: &'a ClusterObjectiveSpec) -> Self {
        Self {
            jobs,
            loads,
            spec,
            cold_start: None,
        }
    }

    pub fn with_cold_start(mut self, cold: &'a [ColdStart]) -> Self {
        self.cold_start = Some(cold);
        self
    }

    fn latency(&self, job: &JobSpec, rate: f64, replicas: f64) -> f64 {
        match self.spec.latency_model {
            LatencyModel::Mdc => {
                let input = QueueInput {
                    service_time: job.service_time,
                    arrival_rate: rate,
                    replicas,
                    percentile: job.slo.percentile.min(1.0 - 1e-9),
                };
                match self.spec.form {
                    ObjectiveForm::Relaxed => relaxed_mdc_latency(&input, &self.spec.knobs),
                    ObjectiveForm::Precise => mdc_latency(&input),
                }
            }
            LatencyModel::UpperBound => (job.service_time * rate / replicas).max(job.service_time),
        }
    }

    fn utility_of_latency(&self, job: &JobSpec, latency: f64) -> f64 {
        match self.spec.form {
            ObjectiveForm::Relaxed => utility_relaxed(latency, &job.slo, &self.spec.utility),
            ObjectiveForm::Precise => utility_original(latency, &job.slo),
        }
    }

    /// Mean predicted utility of served requests for one job at a given
    /// replica count and drop rate.
    pub fn job_utility(&self, idx: usize, replicas: f64, drop_rate: f64) -> f64 {
        let job = &self.jobs[idx];
        let load = &self.loads[idx];
        let cold = self.cold_start.map(|c| c[idx]);
        let keep = 1.0 - drop_rate.clamp(0.0, 1.0);
        let mut sum = 0.0;
        let mut count = 0usize;
        for (step, rates) in load.steps.iter().enumerate() {
            let capacity = match cold {
                Some(c) if step < c.cold_steps => replicas.min(c.ready_replicas).max(1.0),
                _ => replicas,
            };
            match self.spec.load_aggregation {
                LoadAggregation::MeanUtility => {
                    for &rate in rates {
                        let latency = self.latency(job, rate * keep, capacity);
                        sum += self.utility_of_latency(job, latency);
                        count += 1;
                    }
                }
                LoadAggregation::PeakRate => {
                    let peak = rates.iter().copied().fold(0.0f64, f64::max);
                    let latency = self.latency(job, peak * keep, capacity);
                    sum += self.utility_of_latency(job, latency);
                    count += 1;
                }
            }
        }
        if count == 0 {
            1.0
        } else {
            sum / count as f64
        }
    }

    /// Objective value for a candidate plan.
    pub fn value(&self, plan: &AllocationPlan) -> f64 {
        let n = self.jobs.len();
        debug_assert_eq!(plan.len(), n);
        let drops_active = self.spec.kind.optimizes_drops();
        let mut weighted = 0.0;
        let mut min_u = f64::INFINITY;
        let mut max_u = f64::NEG_INFINITY;
        for i in 0..n {
            let d = if drops_active { plan.drop_rates[i].clamp(0.0, 1.0) } else { 0.0 };
            let mut u = self.job_utility(i, plan.replicas[i], d);
            if drops_active {
                u *= penalty_multiplier(d, &self.spec.penalty);
            }
            weighted += self.jobs[i].priority * u;
            min_u = min_u.min(u);
            max_u = max_u.max(u);
        }
        let spread = if n == 0 { 0.0 } else { max_u - min_u };
        let gamma = self.spec.gamma_for(n);
        match self.spec.kind {
            ObjectiveKind::Sum | ObjectiveKind::PenaltySum => weighted,
            ObjectiveKind::Fair => -spread,
            ObjectiveKind::FairSum | ObjectiveKind::PenaltyFairSum => weighted - gamma * spread,
        }
    }
}

/// Mean predicted utility for one job: the average over every sampled
/// trajectory and step of the utility of the estimated latency at the
/// thinned arrival rate.
pub fn job_predicted_utility(
    job: &JobSpec,
    replicas: f64,
    drop_rate: f64,
    load: &JobLoad,
    spec: &ClusterObjectiveSpec,
) -> f64 {
    let jobs = std::slice::from_ref(job);
    let loads = std::slice::from_ref(load);
    ObjectiveEvaluator::new(jobs, loads, spec).job_utility(0, replicas, drop_rate)
}

/// Value of the selected cluster objective for a plan.
pub fn cluster_objective(
    plan: &AllocationPlan,
    jobs: &[JobSpec],
    loads: &[JobLoad],
    spec: &ClusterObjectiveSpec,
) -> Result<f64, ObjectiveError> {
    if plan.len() != jobs.len() || loads.len() != jobs.len() {
        return Err(ObjectiveError::DimensionMismatch {
            plan: plan.len(),
            jobs: jobs.len(),
        });
    }
    Ok(ObjectiveEvaluator::new(jobs, loads, spec).value(plan))
}

/// Feasibility residuals: every entry is >= 0 exactly when the plan
/// respects the resource limits, the one-replica floor, and drop-rate
/// bounds.
pub fn constraint_residuals(
    plan: &AllocationPlan,
    jobs: &[JobSpec],
    limits: &ResourceLimits,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 + 3 * plan.len());
    out.push(limits.max_cpu - plan.total_cpu(jobs));
    out.push(limits.max_mem - plan.total_mem(jobs));
    for &x in &plan.replicas {
        out.push(x - 1.0);
    }
    for &d in &plan.drop_rates {
        out.push(d);
        out.push(1.0 - d);
    }
    out
}

/// True when every residual clears `-tolerance`.
pub fn is_feasible(residuals: &[f64], tolerance: f64) -> bool {
    residuals.iter().all(|&r| r >= -tolerance)
}
