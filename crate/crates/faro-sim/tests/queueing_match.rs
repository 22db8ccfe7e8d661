//! Queueing validation: the engine, switched to exponential service, must
//! reproduce M/M/c waiting-time quantiles; with its default deterministic
//! service the measured tail latency should track the M/D/c estimate.

use faro_core::{mdc_latency, mmc_wait_quantile, JobSpec, QueueInput, RateSeries, ResourceLimits, Slo};
use faro_sim::{ClusterEngine, EngineHooks, ServiceModel, SimConfig};

struct Fixed(u32);
impl EngineHooks for Fixed {
    fn on_minute(&mut self, engine: &mut ClusterEngine, _minute: usize) {
        engine.set_replica_target(0, self.0);
    }
}

fn run_queue(
    servers: u32,
    rho: f64,
    service_time: f64,
    minutes: usize,
    model: ServiceModel,
    seed: u64,
) -> (Vec<f64>, f64) {
    let lambda_per_sec = rho * servers as f64 / service_time;
    let rate_per_min = lambda_per_sec * 60.0;
    let trace = RateSeries::new(vec![rate_per_min; minutes], "queue");
    let job = JobSpec {
        id: "q".into(),
        service_time,
        slo: Slo::new(10.0, 0.99).unwrap(),
        priority: 1.0,
        cpu_per_replica: 1.0,
        mem_per_replica: 1e9,
    };
    let mut cfg = SimConfig::new(
        minutes as f64 * 60.0,
        seed,
        ResourceLimits {
            max_cpu: 1e6,
            max_mem: 1e18,
        },
    );
    cfg.service_model = model;
    cfg.record_waits = true;
    // A queue study, not a drop study; replicas are up from t=0.
    cfg.tail_drop_threshold = 1_000_000;
    cfg.cold_start_delay = 0.0;
    let mut engine = ClusterEngine::new(cfg, vec![job], vec![trace]);
    engine.set_replica_target(0, servers);
    let mut hooks = Fixed(servers);
    engine.run(&mut hooks, 1e18, 1e18);
    // Waits are recorded in FIFO dispatch order, i.e. arrival order;
    // skip the warmup by expected arrival count over 600 s.
    let warm = (lambda_per_sec * 600.0).ceil() as usize;
    let mut waits = engine.jobs[0].waits.clone();
    waits.drain(..waits.len().min(warm));
    (waits, lambda_per_sec)
}

fn empirical_quantile(sorted: &[f64], k: f64) -> f64 {
    let idx = ((sorted.len() as f64 * k).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

#[test]
fn exponential_service_matches_erlang_c_quantiles() {
    // Moderate sample counts keep this under a few seconds; the full-size
    // sweep lives in the acceptance suite.
    for &(servers, rho) in &[(2u32, 0.75), (4, 0.9)] {
        let service_time = 0.2;
        let (mut waits, lambda) = run_queue(
            servers,
            rho,
            service_time,
            2500,
            ServiceModel::Exponential,
            41,
        );
        waits.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(waits.len() > 50_000, "need samples, got {}", waits.len());
        for &k in &[0.9, 0.99] {
            let input = QueueInput {
                service_time,
                arrival_rate: lambda,
                replicas: servers as f64,
                percentile: k,
            };
            let analytic = mmc_wait_quantile(&input).unwrap();
            let measured = empirical_quantile(&waits, k);
            let err = (measured - analytic).abs() / analytic.max(1e-9);
            assert!(
                err < 0.05,
                "c={servers} rho={rho} k={k}: measured {measured:.4} vs analytic {analytic:.4} ({:.1}%)",
                err * 100.0
            );
        }
    }
}

#[test]
fn deterministic_service_tracks_mdc_estimate() {
    // The half-M/M/c rule is an engineering approximation; 15% is the
    // documented tolerance.
    for &(servers, rho) in &[(4u32, 0.75), (8, 0.8)] {
        let service_time = 0.15;
        let (mut waits, lambda) = run_queue(
            servers,
            rho,
            service_time,
            240,
            ServiceModel::Deterministic,
            17,
        );
        waits.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let input = QueueInput {
            service_time,
            arrival_rate: lambda,
            replicas: servers as f64,
            percentile: 0.99,
        };
        let estimate = mdc_latency(&input);
        let measured = empirical_quantile(&waits, 0.99) + service_time;
        let err = (measured - estimate).abs() / estimate;
        assert!(
            err < 0.15,
            "c={servers} rho={rho}: measured p99 {measured:.4} vs estimate {estimate:.4} ({:.1}%)",
            err * 100.0
        );
    }
}
