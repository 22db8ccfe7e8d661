//! The bundled ten-job reference mix: nine diurnal production-style
//! traces with staggered peaks plus one spikier two-peak trace, all
//! rescaled into the 1-1600 requests/minute band. Job parameters follow
//! the standard benchmark shape: 180 ms processing, 720 ms p99 SLO
//! (four times the processing time), one vCPU and 1 GB per replica.
//!
//! Peak heights and phases are tuned so the whole mix needs about 36
//! replicas at its worst minute: 36 is right-sized, anything below is
//! oversubscribed, anything above undersubscribed.

use faro_core::{min_replicas_mdc, SynthKind};
use faro_sim::AblationFlags;

use crate::scenario::{
    JobConfig, PolicyName, PredictorConfig, ScenarioConfig, SolverSettings, TraceBinding,
};

pub const SERVICE_TIME: f64 = 0.18;
pub const SLO_LATENCY: f64 = 0.72;
pub const SLO_PERCENTILE: f64 = 0.99;

fn diurnal(phase: f64, secondary: f64, noise: f64, bursts: f64) -> SynthKind {
    SynthKind::Diurnal {
        mean: 1.0,
        daily_amplitude: 0.65,
        secondary_amplitude: secondary,
        secondary_period_minutes: 480.0,
        phase,
        noise,
        bursts_per_day: bursts,
        burst_magnitude: 0.4,
        burst_minutes: 3,
    }
}

fn job(index: usize, kind: SynthKind, peak: f64, trace_seed: u64) -> JobConfig {
    JobConfig {
        id: format!("job-{index:02}"),
        service_time: SERVICE_TIME,
        slo_latency: SLO_LATENCY,
        slo_percentile: SLO_PERCENTILE,
        priority: 1.0,
        cpu_per_replica: 1.0,
        mem_per_replica: 1e9,
        trace: TraceBinding::Synth {
            kind,
            seed: trace_seed,
            rescale_to: Some((1.0, peak)),
        },
    }
}

/// The ten-job mix at a given replica capacity (one vCPU per replica).
pub fn ten_job_mix(name: &str, capacity_replicas: u32, trials: usize, seed: u64) -> ScenarioConfig {
    // Two co-peaking clusters (business-hours rhythm): most jobs crest
    // together, a few run antiphase. Tuned so the worst-minute total
    // demand sits near 36 replicas.
    let peaks = [
        1600.0, 1550.0, 1450.0, 1350.0, 1150.0, 1050.0, 900.0, 850.0, 700.0,
    ];
    let phases = [
        0.00, 0.06, 0.12, 0.03, 0.50, 0.09, 0.56, 0.05, 0.62,
    ];
    let mut jobs: Vec<JobConfig> = (0..9)
        .map(|i| {
            job(
                i,
                diurnal(phases[i], 0.15, 0.06, 2.0),
                peaks[i],
                1000 + i as u64,
            )
        })
        .collect();
    // The tenth trace is spikier, with two sharp peaks per day.
    jobs.push(job(
        9,
        SynthKind::Diurnal {
            mean: 1.0,
            daily_amplitude: 0.45,
            secondary_amplitude: 0.50,
            secondary_period_minutes: 720.0,
            phase: 0.30,
            noise: 0.10,
            bursts_per_day: 6.0,
            burst_magnitude: 1.0,
            burst_minutes: 2,
        },
        1200.0,
        1009,
    ));

    ScenarioConfig {
        name: name.to_string(),
        jobs,
        max_cpu: capacity_replicas as f64,
        max_mem: capacity_replicas as f64 * 1e9,
        policies: PolicyName::all().to_vec(),
        predictor: PredictorConfig::DampedMean,
        ablation: AblationFlags::default(),
        seed,
        trials,
        duration_minutes: 1440,
        bootstrap_minutes: 30,
        alpha: 4.0,
        rho_max: 0.95,
        solver: SolverSettings::default(),
        tail_drop_threshold: 50,
        cold_start_delay: 60.0,
        autoscaler: None,
    }
}

/// Worst-minute total of per-job minimal M/D/c replica counts: what the
/// cluster must hold for every job to meet its SLO at once.
pub fn right_size_replicas(traces: &[Vec<f64>], service_time: f64, slo: f64, k: f64) -> u32 {
    let minutes = traces.iter().map(|t| t.len()).min().unwrap_or(0);
    let mut worst = 0u32;
    for m in 0..minutes {
        let mut total = 0u32;
        for trace in traces {
            let rate_per_sec = trace[m] / 60.0;
            total += min_replicas_mdc(rate_per_sec, service_time, slo, k, 64).unwrap_or(64);
        }
        worst = worst.max(total);
    }
    worst
}
