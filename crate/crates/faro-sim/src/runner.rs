//! Drives one trial: engine plus policy, producing a metrics report.

use faro_core::{JobSpec, RateSeries, UtilityParams};

use crate::config::{AutoscalerConfig, SimConfig};
use crate::engine::{ClusterEngine, EngineHooks};
use crate::metrics::{build_report, MetricsReport};
use crate::policy::{ClusterState, JobState, PlanUpdate, PolicyCtx, ScalingPolicy};

/// Everything one simulation trial needs.
pub struct TrialSetup<'a> {
    pub jobs: &'a [JobSpec],
    /// Per-job evaluation traces, requests per minute.
    pub traces: &'a [RateSeries],
    /// Optional arrival history preloaded before minute 0 so predictors
    /// see a warm window at the first planning tick.
    pub bootstrap_history: Option<&'a [Vec<f64>]>,
    pub sim: SimConfig,
    pub auto: AutoscalerConfig,
    /// Utility curve used for measured (report-side) utilities.
    pub utility: UtilityParams,
}

struct PolicyBridge<'a, 'b> {
    policy: &'a mut dyn ScalingPolicy,
    setup: &'a TrialSetup<'b>,
    degraded_cycles: u64,
}

impl PolicyBridge<'_, '_> {
    fn state(&self, engine: &ClusterEngine) -> ClusterState {
        let window = self.setup.auto.history_window;
        let cutoff = engine.now - self.setup.auto.short_period;
        let jobs: Vec<JobState> = engine
            .jobs
            .iter()
            .map(|j| {
                let hist = &j.rate_history;
                let tail = hist[hist.len().saturating_sub(window)..].to_vec();
                JobState {
                    ready: j.ready(),
                    pending: j.pending_count(),
                    planned: j.planned(),
                    rate_history: tail,
                    window_latency: j.window_quantile(cutoff),
                    mean_service_time: j.spec.service_time,
                }
            })
            .collect();
        let now_minute = engine
            .jobs
            .first()
            .map(|j| j.rate_history.len().saturating_sub(1))
            .unwrap_or(0);
        ClusterState {
            now: engine.now,
            now_minute,
            jobs,
        }
    }

    fn apply(&mut self, engine: &mut ClusterEngine, update: PlanUpdate) {
        if update.degraded {
            self.degraded_cycles += 1;
        }
        for (i, &target) in update.replicas.iter().enumerate() {
            engine.set_replica_target(i, target);
        }
        for (i, &d) in update.drop_rates.iter().enumerate() {
            engine.set_drop_rate(i, d);
        }
    }
}

impl EngineHooks for PolicyBridge<'_, '_> {
    fn on_long_tick(&mut self, engine: &mut ClusterEngine, _now: f64) {
        let state = self.state(engine);
        let ctx = PolicyCtx {
            jobs: self.setup.jobs,
            limits: &self.setup.sim.limits,
            config: &self.setup.auto,
            seed: self.setup.sim.seed,
        };
        if let Some(update) = self.policy.on_long_tick(&state, &ctx) {
            self.apply(engine, update);
        }
    }

    fn on_short_tick(&mut self, engine: &mut ClusterEngine, _now: f64) {
        let state = self.state(engine);
        let ctx = PolicyCtx {
            jobs: self.setup.jobs,
            limits: &self.setup.sim.limits,
            config: &self.setup.auto,
            seed: self.setup.sim.seed,
        };
        if let Some(update) = self.policy.on_short_tick(&state, &ctx) {
            self.apply(engine, update);
        }
    }
}

/// Runs one full trial and assembles its report.
pub fn run_trial(setup: &TrialSetup<'_>, policy: &mut dyn ScalingPolicy) -> MetricsReport {
    let mut engine = ClusterEngine::new(
        setup.sim.clone(),
        setup.jobs.to_vec(),
        setup.traces.to_vec(),
    );
    if let Some(hist) = setup.bootstrap_history {
        engine.preload_history(hist);
    }
    let policy_name = policy.name();
    let mut bridge = PolicyBridge {
        policy,
        setup,
        degraded_cycles: 0,
    };
    engine.run(
        &mut bridge,
        setup.auto.long_period,
        setup.auto.short_period,
    );
    let degraded = bridge.degraded_cycles;
    let starved = bridge.policy.starved_upscales();
    build_report(
        &engine,
        setup.jobs,
        &policy_name,
        &setup.utility,
        degraded,
        starved,
    )
}
