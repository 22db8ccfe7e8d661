//! Experiment orchestration: trial fan-out, report emission, ablation
//! sweeps, and the solver-scaling benchmark.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use faro_core::{
    hierarchical_solve, AllocationPlan, ClusterObjectiveSpec, JobLoad, JobSpec, ObjectiveForm,
    ObjectiveKind, ResourceLimits, Slo, SolverConfig, UtilityParams,
};
use faro_sim::{run_trial, MetricsReport, TrialSetup};

use crate::report::{
    policy_dir, write_json, write_timeline_csv, AggregateReport, TrialSummary,
};
use crate::scenario::{build_policy, prepare, PolicyName, PreparedScenario, ScenarioConfig};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub policy: Option<PolicyName>,
    pub parallel: usize,
    /// Skip the per-minute CSV timelines (summaries only).
    pub skip_timelines: bool,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            seed: None,
            trials: None,
            policy: None,
            parallel: 1,
            skip_timelines: false,
        }
    }
}

/// Applies CLI overrides to a loaded scenario.
pub fn apply_overrides(mut config: ScenarioConfig, opts: &RunOptions) -> ScenarioConfig {
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(trials) = opts.trials {
        config.trials = trials;
    }
    if let Some(policy) = opts.policy {
        config.policies = vec![policy];
    }
    config
}

/// Runs every trial of one policy, optionally across threads. Trial `i`
/// uses seed `config.seed + i`; outputs are ordered by trial index
/// regardless of scheduling.
pub fn run_policy_trials(
    config: &ScenarioConfig,
    prepared: &PreparedScenario,
    policy: PolicyName,
    parallel: usize,
) -> Result<Vec<MetricsReport>> {
    let trials = config.trials;
    let parallel = parallel.max(1);
    let mut reports: Vec<Option<MetricsReport>> = Vec::new();
    reports.resize_with(trials, || None);

    let run_one = |trial: usize| -> Result<MetricsReport> {
        let trial_seed = config.seed + trial as u64;
        let mut policy_impl = build_policy(policy, config, prepared, trial_seed)?;
        let setup = TrialSetup {
            jobs: &prepared.jobs,
            traces: &prepared.eval,
            bootstrap_history: Some(&prepared.bootstrap),
            sim: config.sim_config(trial_seed),
            auto: config.autoscaler_config(),
            utility: UtilityParams {
                alpha: config.alpha,
            },
        };
        Ok(run_trial(&setup, policy_impl.as_mut()))
    };

    if parallel == 1 || trials == 1 {
        for (i, slot) in reports.iter_mut().enumerate() {
            *slot = Some(run_one(i)?);
        }
    } else {
        let errors = std::sync::Mutex::new(Vec::<anyhow::Error>::new());
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots = std::sync::Mutex::new(&mut reports);
        std::thread::scope(|scope| {
            for _ in 0..parallel.min(trials) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= trials {
                        break;
                    }
                    match run_one(i) {
                        Ok(report) => {
                            slots.lock().unwrap()[i] = Some(report);
                        }
                        Err(e) => {
                            errors.lock().unwrap().push(e);
                            break;
                        }
                    }
                });
            }
        });
        if let Some(e) = errors.into_inner().unwrap().pop() {
            return Err(e);
        }
    }
    Ok(reports.into_iter().map(|r| r.expect("trial ran")).collect())
}

/// Runs a scenario end to end for every listed policy, writing trial
/// summaries, timelines, and an aggregate per policy.
pub fn run_scenario(config: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<AggregateReport>> {
    config.validate()?;
    let prepared = prepare(config)?;
    let mut aggregates = Vec::new();
    for &policy in &config.policies {
        let reports = run_policy_trials(config, &prepared, policy, opts.parallel)
            .with_context(|| format!("policy {}", policy.as_str()))?;
        let dir = policy_dir(&opts.out, &config.name, policy.as_str());
        let mut summaries = Vec::with_capacity(reports.len());
        for report in &reports {
            let summary = TrialSummary::from_report(report);
            write_json(&dir.join(format!("trial-{}.json", report.seed)), &summary)?;
            if !opts.skip_timelines {
                write_timeline_csv(&dir.join(format!("timeline-{}.csv", report.seed)), report)?;
            }
            summaries.push(summary);
        }
        let aggregate = AggregateReport::build(config, policy.as_str(), summaries);
        write_json(&dir.join("aggregate.json"), &aggregate)?;
        aggregates.push(aggregate);
    }
    Ok(aggregates)
}

pub fn run_scenario_file(path: &Path, opts: &RunOptions) -> Result<Vec<AggregateReport>> {
    let config = apply_overrides(ScenarioConfig::from_path(path)?, opts);
    run_scenario(&config, opts)
}

/// One ablation axis: a human-readable label and the flag it clears.
pub const ABLATION_AXES: [&str; 6] = [
    "relaxation",
    "mdc",
    "prediction",
    "probabilistic",
    "hybrid",
    "shrink",
];

fn clear_flag(config: &mut ScenarioConfig, axis: &str) {
    match axis {
        "relaxation" => config.ablation.relaxation = false,
        "mdc" => config.ablation.mdc = false,
        "prediction" => config.ablation.prediction = false,
        "probabilistic" => config.ablation.probabilistic = false,
        "hybrid" => config.ablation.hybrid = false,
        "shrink" => config.ablation.shrink = false,
        _ => unreachable!("unknown ablation axis"),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub mean_lost_utility: f64,
    pub sd_lost_utility: f64,
    pub mean_violation_rate: f64,
}

/// Runs the scenario once with every feature on, then once per axis with
/// that feature disabled. The scenario must name exactly one policy.
pub fn run_ablation(config: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    let mut variants: Vec<(String, ScenarioConfig)> = Vec::new();
    let mut base = config.clone();
    base.name = format!("{}-full", config.name);
    variants.push(("full".into(), base));
    for axis in ABLATION_AXES {
        let mut v = config.clone();
        v.name = format!("{}-no-{axis}", config.name);
        clear_flag(&mut v, axis);
        variants.push((format!("no-{axis}"), v));
    }
    for (label, variant) in variants {
        let aggregates = run_scenario(&variant, opts)?;
        let a = &aggregates[0];
        rows.push(AblationRow {
            variant: label,
            mean_lost_utility: a.mean_lost_utility,
            sd_lost_utility: a.sd_lost_utility,
            mean_violation_rate: a.mean_violation_rate,
        });
    }
    write_json(&opts.out.join(format!("{}-ablation.json", config.name)), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverBenchRow {
    pub jobs: usize,
    pub group_count: usize,
    pub wall_ms: f64,
    pub objective: f64,
    pub evaluations: usize,
}

/// Solver scaling: identical-footprint jobs with mixed loads, solved at
/// different group counts. Returns wall-clock and achieved objective.
pub fn bench_solver(job_counts: &[usize], group_counts: &[usize], seed: u64) -> Vec<SolverBenchRow> {
    let mut rows = Vec::new();
    for &n in job_counts {
        let jobs: Vec<JobSpec> = (0..n)
            .map(|i| JobSpec {
                id: format!("j{i}"),
                service_time: 0.18,
                slo: Slo::new(0.72, 0.99).unwrap(),
                priority: 1.0,
                cpu_per_replica: 1.0,
                mem_per_replica: 1e9,
            })
            .collect();
        let loads: Vec<JobLoad> = (0..n)
            .map(|i| {
                let base = 4.0 + (i % 7) as f64 * 3.0;
                JobLoad {
                    steps: (0..7)
                        .map(|s| {
                            (0..20)
                                .map(|q| base * (1.0 + 0.1 * ((s + q + i) % 5) as f64))
                                .collect()
                        })
                        .collect(),
                }
            })
            .collect();
        let limits = ResourceLimits {
            max_cpu: (n * 4) as f64,
            max_mem: (n * 4) as f64 * 1e9,
        };
        let spec = ClusterObjectiveSpec::new(ObjectiveKind::Sum, ObjectiveForm::Relaxed);
        let initial = AllocationPlan::uniform(n, 1.0);
        for &g in group_counts {
            let config = SolverConfig {
                group_count: g.max(1),
                seed,
                ..Default::default()
            };
            let start = Instant::now();
            let outcome = hierarchical_solve(&jobs, &loads, &limits, &spec, &initial, None, &config);
            rows.push(SolverBenchRow {
                jobs: n,
                group_count: g,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
                objective: outcome.value,
                evaluations: outcome.evaluations,
            });
        }
    }
    rows
}
