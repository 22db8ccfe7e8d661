//! Derivative-free constrained maximization of cluster objectives.
//!
//! The relaxed objective is climbed with COBYLA (linear-approximation
//! trust region over inequality constraints), warm-started from the
//! current allocation. Every candidate the solver evaluates is screened
//! against the constraint residuals so the best feasible iterate is always
//! available, even when the evaluation budget runs out.
//!
//! For large job counts the solve runs hierarchically: jobs are randomly
//! partitioned into groups, each group is collapsed into one pseudo-job
//! (summed arrival rates, averaged processing time, summed resource
//! footprint), the group problem is solved, and each group's replica
//! budget is split back across members proportionally to their offered
//! work `lambda * p`.

use std::cell::{Cell, RefCell};

use cobyla::{minimize, Func, RhoBeg, StopTols, SuccessStatus};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::objectives::{
    is_feasible, AllocationPlan, ClusterObjectiveSpec, ColdStart, JobLoad, JobSpec,
    ObjectiveEvaluator, ResourceLimits,
};
use crate::utility::Slo;

/// Residuals handed to the solver are pre-normalized, so feasibility is a
/// flat 1e-6 of each limit.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-6;

/// Drop-rate variables live in [0, 1]; scaling them up lets one trust
/// region radius fit both replica counts and drop rates.
const DROP_SCALE: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Objective evaluation budget per solve.
    pub max_iterations: usize,
    /// Initial trust-region radius, in replica units.
    pub initial_step: f64,
    /// Number of random groups for the hierarchical solve.
    pub group_count: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            initial_step: 2.0,
            group_count: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub plan: AllocationPlan,
    /// Objective value at `plan`.
    pub value: f64,
    /// Set when the budget ran out, or no feasible iterate was found and
    /// the initial plan was returned unchanged.
    pub degraded: bool,
    pub evaluations: usize,
}

/// Local maximization of a relaxed objective under residual constraints.
///
/// `constraints` must return residuals that are >= 0 on feasible plans
/// (normalize resource rows by their limits). Deterministic for fixed
/// inputs. On budget exhaustion the best feasible iterate seen so far is
/// returned with `degraded` set.
pub fn solve_relaxed<F, C>(
    objective: F,
    constraints: C,
    initial: &AllocationPlan,
    optimize_drops: bool,
    config: &SolverConfig,
) -> SolveOutcome
where
    F: Fn(&AllocationPlan) -> f64,
    C: Fn(&AllocationPlan) -> Vec<f64>,
{
    let floors = vec![1.0; initial.len()];
    solve_bounded(objective, constraints, initial, &floors, optimize_drops, config)
}

/// `solve_relaxed` with per-variable replica floors. Group problems need
/// floors equal to the group size so every member keeps one replica.
pub fn solve_bounded<F, C>(
    objective: F,
    constraints: C,
    initial: &AllocationPlan,
    floors: &[f64],
    optimize_drops: bool,
    config: &SolverConfig,
) -> SolveOutcome
where
    F: Fn(&AllocationPlan) -> f64,
    C: Fn(&AllocationPlan) -> Vec<f64>,
{
    let n = initial.len();
    if n == 0 {
        return SolveOutcome {
            plan: initial.clone(),
            value: objective(initial),
            degraded: false,
            evaluations: 1,
        };
    }

    let dims = if optimize_drops { 2 * n } else { n };
    let base_drops = initial.drop_rates.clone();
    let decode = move |v: &[f64]| -> AllocationPlan {
        AllocationPlan {
            replicas: v[..n]
                .iter()
                .map(|&x| if x.is_finite() { x } else { 1.0 })
                .collect(),
            drop_rates: if optimize_drops {
                v[n..]
                    .iter()
                    .map(|&s| (s / DROP_SCALE).clamp(0.0, 1.0))
                    .collect()
            } else {
                base_drops.clone()
            },
        }
    };

    let mut x0: Vec<f64> = initial
        .replicas
        .iter()
        .zip(floors)
        .map(|(&x, &lo)| x.max(lo))
        .collect();
    let mut bounds: Vec<(f64, f64)> = floors.iter().map(|&lo| (lo, 1e6)).collect();
    if optimize_drops {
        x0.extend(initial.drop_rates.iter().map(|&d| d.clamp(0.0, 1.0) * DROP_SCALE));
        bounds.extend(std::iter::repeat((0.0, DROP_SCALE)).take(n));
    }

    // COBYLA's final point can sit slightly infeasible or below an interior
    // iterate when the budget expires; keep the best feasible one ourselves.
    let best: RefCell<Option<(f64, AllocationPlan)>> = RefCell::new(None);
    let evals = Cell::new(0usize);

    let objective_ref = &objective;
    let constraints_ref = &constraints;
    let decode_ref = &decode;

    let obj_fn = |v: &[f64], _: &mut ()| -> f64 {
        let plan = decode_ref(v);
        let value = objective_ref(&plan);
        evals.set(evals.get() + 1);
        if is_feasible(&constraints_ref(&plan), CONSTRAINT_TOLERANCE) {
            let mut slot = best.borrow_mut();
            if slot.as_ref().map_or(true, |(b, _)| value > *b) {
                *slot = Some((value, plan));
            }
        }
        -value
    };

    let m = constraints(initial).len();
    let cons_fns: Vec<_> = (0..m)
        .map(|i| move |v: &[f64], _: &mut ()| -> f64 { constraints_ref(&decode_ref(v))[i] })
        .collect();
    let cons_refs: Vec<&dyn Func<()>> = cons_fns.iter().map(|c| c as &dyn Func<()>).collect();

    let stop = StopTols {
        xtol_abs: vec![1e-3; dims],
        ..StopTols::default()
    };
    let result = minimize(
        obj_fn,
        &x0,
        &bounds,
        &cons_refs,
        (),
        config.max_iterations,
        RhoBeg::All(config.initial_step),
        Some(stop),
    );
    let budget_exhausted = matches!(result, Ok((SuccessStatus::MaxEvalReached, _, _)));

    let evaluations = evals.get();
    match best.into_inner() {
        Some((value, plan)) => SolveOutcome {
            plan,
            value,
            degraded: budget_exhausted,
            evaluations,
        },
        None => SolveOutcome {
            plan: initial.clone(),
            value: objective(initial),
            degraded: true,
            evaluations,
        },
    }
}

/// Residuals for solver consumption: resource rows divided by their limits
/// so one tolerance fits every constraint.
pub fn normalized_residuals(
    plan: &AllocationPlan,
    jobs: &[JobSpec],
    limits: &ResourceLimits,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 + 3 * plan.len());
    out.push((limits.max_cpu - plan.total_cpu(jobs)) / limits.max_cpu.max(1e-12));
    out.push((limits.max_mem - plan.total_mem(jobs)) / limits.max_mem.max(1e-12));
    for &x in &plan.replicas {
        out.push(x - 1.0);
    }
    for &d in &plan.drop_rates {
        out.push(d);
        out.push(1.0 - d);
    }
    out
}

/// Continuous multi-tenant solve, hierarchically grouped for scale.
///
/// With `group_count >= n` every job is its own group and this is a plain
/// per-job solve. Otherwise jobs are shuffled (seeded) and dealt
/// round-robin into `group_count` groups; the aggregated group problem is
/// solved and each group's budget is split over members proportionally to
/// mean offered work, never below one replica.
pub fn hierarchical_solve(
    jobs: &[JobSpec],
    loads: &[JobLoad],
    limits: &ResourceLimits,
    spec: &ClusterObjectiveSpec,
    initial: &AllocationPlan,
    cold_start: Option<&[ColdStart]>,
    config: &SolverConfig,
) -> SolveOutcome {
    let n = jobs.len();
    let g = config.group_count.clamp(1, n.max(1));
    let optimize_drops = spec.kind.optimizes_drops();

    if g == n {
        let evaluator = match cold_start {
            Some(c) => ObjectiveEvaluator::new(jobs, loads, spec).with_cold_start(c),
            None => ObjectiveEvaluator::new(jobs, loads, spec),
        };
        return solve_relaxed(
            |plan| evaluator.value(plan),
            |plan| normalized_residuals(plan, jobs, limits),
            initial,
            optimize_drops,
            config,
        );
    }

    // Shuffled round-robin: every job lands in a random group while group
    // sizes stay balanced, so no group is starved of its per-member floor.
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    order.shuffle(&mut rng);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); g];
    for (slot, &job) in order.iter().enumerate() {
        members[slot % g].push(job);
    }
    for group in members.iter_mut() {
        group.sort_unstable();
    }

    let steps = loads.first().map(|l| l.steps.len()).unwrap_or(0);
    let mut group_jobs = Vec::with_capacity(g);
    let mut group_loads = Vec::with_capacity(g);
    let mut group_cold = Vec::with_capacity(g);
    let mut group_initial = AllocationPlan {
        replicas: Vec::with_capacity(g),
        drop_rates: Vec::with_capacity(g),
    };
    let mut floors = Vec::with_capacity(g);
    for (k, group) in members.iter().enumerate() {
        let size = group.len() as f64;
        let mut load = JobLoad {
            steps: vec![Vec::new(); steps],
        };
        for step in 0..steps {
            let samples = loads[group[0]].steps[step].len();
            let mut sums = vec![0.0; samples];
            for &i in group {
                for (s, &r) in loads[i].steps[step].iter().enumerate() {
                    sums[s] += r;
                }
            }
            load.steps[step] = sums;
        }
        group_jobs.push(JobSpec {
            id: format!("group-{k}"),
            service_time: group.iter().map(|&i| jobs[i].service_time).sum::<f64>() / size,
            slo: Slo {
                target_latency: group
                    .iter()
                    .map(|&i| jobs[i].slo.target_latency)
                    .fold(f64::INFINITY, f64::min),
                percentile: group
                    .iter()
                    .map(|&i| jobs[i].slo.percentile)
                    .fold(0.0f64, f64::max),
            },
            priority: group.iter().map(|&i| jobs[i].priority).sum(),
            cpu_per_replica: group.iter().map(|&i| jobs[i].cpu_per_replica).sum::<f64>() / size,
            mem_per_replica: group.iter().map(|&i| jobs[i].mem_per_replica).sum::<f64>() / size,
        });
        group_loads.push(load);
        if let Some(cold) = cold_start {
            group_cold.push(ColdStart {
                ready_replicas: group.iter().map(|&i| cold[i].ready_replicas).sum(),
                cold_steps: group.iter().map(|&i| cold[i].cold_steps).max().unwrap_or(0),
            });
        }
        group_initial
            .replicas
            .push(group.iter().map(|&i| initial.replicas[i].max(1.0)).sum());
        group_initial
            .drop_rates
            .push(group.iter().map(|&i| initial.drop_rates[i]).sum::<f64>() / size);
        floors.push(size);
    }

    let evaluator = if cold_start.is_some() {
        ObjectiveEvaluator::new(&group_jobs, &group_loads, spec).with_cold_start(&group_cold)
    } else {
        ObjectiveEvaluator::new(&group_jobs, &group_loads, spec)
    };
    let outcome = solve_bounded(
        |plan| evaluator.value(plan),
        |plan| normalized_residuals(plan, &group_jobs, limits),
        &group_initial,
        &floors,
        optimize_drops,
        config,
    );

    // Split each group's replica budget across members by offered work.
    let mut plan = AllocationPlan::uniform(n, 1.0);
    for (k, group) in members.iter().enumerate() {
        let budget = outcome.plan.replicas[k];
        let weights: Vec<f64> = group
            .iter()
            .map(|&i| loads[i].mean_rate() * jobs[i].service_time)
            .collect();
        let total: f64 = weights.iter().sum();
        let extra = (budget - group.len() as f64).max(0.0);
        for (slot, &i) in group.iter().enumerate() {
            let share = if total > 0.0 {
                weights[slot] / total
            } else {
                1.0 / group.len() as f64
            };
            plan.replicas[i] = 1.0 + extra * share;
            plan.drop_rates[i] = outcome.plan.drop_rates[k];
        }
    }

    let full_eval = match cold_start {
        Some(c) => ObjectiveEvaluator::new(jobs, loads, spec).with_cold_start(c),
        None => ObjectiveEvaluator::new(jobs, loads, spec),
    };
    let value = full_eval.value(&plan);
    SolveOutcome {
        plan,
        value,
        degraded: outcome.degraded,
        evaluations: outcome.evaluations,
    }
}

/// Rounds a continuous plan to integer replica counts.
///
/// Floors every count (at least 1), repairs any infeasibility by
/// decrementing the jobs with the largest fractional parts first, then
/// greedily spends remaining capacity on +1 steps with the best objective
/// gain per vCPU. Ties break on the lowest job index.
pub fn integerize<F>(
    continuous: &AllocationPlan,
    jobs: &[JobSpec],
    limits: &ResourceLimits,
    objective: F,
) -> AllocationPlan
where
    F: Fn(&AllocationPlan) -> f64,
{
    let n = continuous.len();
    let mut plan = AllocationPlan {
        replicas: continuous
            .replicas
            .iter()
            .map(|&x| x.floor().max(1.0))
            .collect(),
        drop_rates: continuous.drop_rates.clone(),
    };

    let feasible = |p: &AllocationPlan| {
        p.total_cpu(jobs) <= limits.max_cpu + 1e-9 && p.total_mem(jobs) <= limits.max_mem + 1e-9
    };

    if !feasible(&plan) {
        // Shed the most speculative fractions first.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let fa = continuous.replicas[a].fract();
            let fb = continuous.replicas[b].fract();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        'repair: while !feasible(&plan) {
            let mut any = false;
            for &i in &order {
                if plan.replicas[i] > 1.0 {
                    plan.replicas[i] -= 1.0;
                    any = true;
                    if feasible(&plan) {
                        break 'repair;
                    }
                }
            }
            if !any {
                break;
            }
        }
    }

    let mut base = objective(&plan);
    loop {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n {
            let mut candidate = plan.clone();
            candidate.replicas[i] += 1.0;
            if !feasible(&candidate) {
                continue;
            }
            let gain = (objective(&candidate) - base) / jobs[i].cpu_per_replica.max(1e-12);
            if gain > 1e-12 && best.map_or(true, |(g, _)| gain > g) {
                best = Some((gain, i));
            }
        }
        match best {
            Some((_, i)) => {
                plan.replicas[i] += 1.0;
                base = objective(&plan);
            }
            None => break,
        }
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{cluster_objective, ObjectiveForm, ObjectiveKind};

    fn job(id: &str, p: f64) -> JobSpec {
        JobSpec {
            id: id.into(),
            service_time: p,
            slo: Slo::new(0.72, 0.99).unwrap(),
            priority: 1.0,
            cpu_per_replica: 1.0,
            mem_per_replica: 1e9,
        }
    }

    fn limits(cpu: f64) -> ResourceLimits {
        ResourceLimits {
            max_cpu: cpu,
            max_mem: cpu * 1e9,
        }
    }

    #[test]
    fn single_job_lands_near_scan_optimum() {
        let jobs = vec![job("a", 0.18)];
        let loads = vec![JobLoad::constant(25.0, 3)];
        let spec = ClusterObjectiveSpec::new(ObjectiveKind::Sum, ObjectiveForm::Relaxed);
        let lim = limits(64.0);
        let config = SolverConfig::default();

        // Scan oracle: the smallest replica count reaching utility 1.
        let mut scan_best = 1;
        for x in 1..=20 {
            let plan = AllocationPlan::uniform(1, x as f64);
            let v = cluster_objective(&plan, &jobs, &loads, &spec).unwrap();
            if v >= 1.0 - 1e-12 {
                scan_best = x;
                break;
            }
        }

        let outcome = solve_relaxed(
            |p| cluster_objective(p, &jobs, &loads, &spec).unwrap(),
            |p| normalized_residuals(p, &jobs, &lim),
            &AllocationPlan::uniform(1, 1.0),
            false,
            &config,
        );
        assert!(!outcome.degraded);
        assert!(
            outcome.plan.replicas[0] >= scan_best as f64 - 1.0
                && outcome.plan.replicas[0] <= scan_best as f64 + 2.0,
            "solver {} vs scan {}",
            outcome.plan.replicas[0],
            scan_best
        );
    }

    #[test]
    fn pointlike_feasible_set_returns_initial() {
        let jobs = vec![job("a", 0.18), job("b", 0.18)];
        let loads = vec![JobLoad::constant(30.0, 1), JobLoad::constant(30.0, 1)];
        let spec = ClusterObjectiveSpec::new(ObjectiveKind::Sum, ObjectiveForm::Relaxed);
        let lim = limits(2.0);
        let initial = AllocationPlan::uniform(2, 1.0);
        let outcome = solve_relaxed(
            |p| cluster_objective(p, &jobs, &loads, &spec).unwrap(),
            |p| normalized_residuals(p, &jobs, &lim),
            &initial,
            false,
            &SolverConfig::default(),
        );
        assert_eq!(outcome.plan.replicas, initial.replicas);
    }

    #[test]
    fn determinism_bit_exact() {
        let jobs: Vec<JobSpec> = (0..6)
            .map(|i| job(&format!("j{i}"), 0.15 + 0.01 * i as f64))
            .collect();
        let loads: Vec<JobLoad> = (0..6)
            .map(|i| JobLoad::constant(5.0 + 3.0 * i as f64, 4))
            .collect();
        let spec = ClusterObjectiveSpec::new(ObjectiveKind::FairSum, ObjectiveForm::Relaxed);
        let lim = limits(24.0);
        let config = SolverConfig {
            group_count: 3,
            seed: 7,
            ..Default::default()
        };
        let run = || {
            hierarchical_solve(
                &jobs,
                &loads,
                &lim,
                &spec,
                &AllocationPlan::uniform(6, 2.0),
                None,
                &config,
            )
        };
        let a = run();
        let b = run();
        assert_eq!(a.plan, b.plan);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn hierarchical_identical_jobs_share_evenly() {
        let n = 20;
        let jobs: Vec<JobSpec> = (0..n).map(|i| job(&format!("j{i}"), 0.18)).collect();
        let loads: Vec<JobLoad> = (0..n).map(|_| JobLoad::constant(10.0, 2)).collect();
        let spec = ClusterObjectiveSpec::new(ObjectiveKind::Sum, ObjectiveForm::Relaxed);
        let lim = limits(80.0);
        let config = SolverConfig {
            group_count: 4,
            seed: 3,
            ..Default::default()
        };
        let outcome = hierarchical_solve(
            &jobs,
            &loads,
            &lim,
            &spec,
            &AllocationPlan::uniform(n, 2.0),
            None,
            &config,
        );
        let mean: f64 = outcome.plan.replicas.iter().sum::<f64>() / n as f64;
        for (i, &x) in outcome.plan.replicas.iter().enumerate() {
            assert!((x - mean).abs() <= 1.0 + 1e-9, "job {i}: {x} vs mean {mean}");
        }
    }

    #[test]
    fn group_one_aggregates_everything() {
        let jobs = vec![job("a", 0.18), job("b", 0.18), job("c", 0.18)];
        let loads = vec![
            JobLoad::constant(20.0, 2),
            JobLoad::constant(10.0, 2),
            JobLoad::constant(10.0, 2),
        ];
        let spec = ClusterObjectiveSpec::new(ObjectiveKind::Sum, ObjectiveForm::Relaxed);
        let lim = limits(32.0);
        let config = SolverConfig {
            group_count: 1,
            seed: 1,
            ..Default::default()
        };
        let outcome = hierarchical_solve(
            &jobs,
            &loads,
            &lim,
            &spec,
            &AllocationPlan::uniform(3, 2.0),
            None,
            &config,
        );
        // Work shares: 20:10:10 of whatever budget the aggregate got.
        let x = &outcome.plan.replicas;
        assert!(x[0] > x[1] - 1e-9 && (x[1] - x[2]).abs() < 1e-9);
        for &xi in x {
            assert!(xi >= 1.0);
        }
    }

    #[test]
    fn integerize_fixpoint_and_tiebreak() {
        let jobs = vec![job("a", 0.18), job("b", 0.18)];
        let loads = vec![JobLoad::constant(20.0, 1), JobLoad::constant(20.0, 1)];
        let spec = ClusterObjectiveSpec::new(ObjectiveKind::Sum, ObjectiveForm::Relaxed);
        let obj = |p: &AllocationPlan| cluster_objective(p, &jobs, &loads, &spec).unwrap();

        // Already integral and feasible: unchanged.
        let plan = AllocationPlan {
            replicas: vec![3.0, 2.0],
            drop_rates: vec![0.0, 0.0],
        };
        let out = integerize(&plan, &jobs, &limits(5.0), obj);
        assert_eq!(out.replicas, vec![3.0, 2.0]);

        // {2.6, 2.6} with capacity 5: one +1 fits, job 0 wins the tie.
        let plan = AllocationPlan {
            replicas: vec![2.6, 2.6],
            drop_rates: vec![0.0, 0.0],
        };
        let out = integerize(&plan, &jobs, &limits(5.0), obj);
        assert_eq!(out.replicas, vec![3.0, 2.0]);
    }

    #[test]
    fn integerize_repairs_infeasible_floors() {
        let jobs = vec![job("a", 0.18), job("b", 0.18), job("c", 0.18)];
        let loads = vec![JobLoad::constant(5.0, 1); 3];
        let spec = ClusterObjectiveSpec::new(ObjectiveKind::Sum, ObjectiveForm::Relaxed);
        let obj = |p: &AllocationPlan| cluster_objective(p, &jobs, &loads, &spec).unwrap();
        let plan = AllocationPlan {
            replicas: vec![3.9, 3.2, 3.7],
            drop_rates: vec![0.0; 3],
        };
        let out = integerize(&plan, &jobs, &limits(8.0), obj);
        assert!(out.total_cpu(&jobs) <= 8.0 + 1e-9);
        assert!(out.replicas.iter().all(|&x| x >= 1.0 && x.fract() == 0.0));
    }
}
