//! Report emission: per-trial JSON summaries, per-minute CSV timelines,
//! and aggregate files with mean/SD across trials.
//!
//! Reports are self-describing (the full scenario config is echoed into
//! the aggregate) and contain no wall-clock timestamps, so identical seeds
//! reproduce byte-identical files.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use faro_sim::MetricsReport;

use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSummary {
    pub id: String,
    pub slo_violation_rate: f64,
    pub mean_utility: f64,
    pub mean_effective_utility: f64,
    pub arrivals: u64,
    pub completions: u64,
    pub tail_drops: u64,
    pub explicit_drops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub seed: u64,
    pub policy: String,
    pub mean_lost_utility: f64,
    pub mean_lost_effective_utility: f64,
    pub cluster_violation_rate: f64,
    pub mean_cluster_utility: f64,
    pub degraded_cycles: u64,
    pub starved_upscales: u64,
    pub conservation_ok: bool,
    pub jobs: Vec<JobSummary>,
}

impl TrialSummary {
    pub fn from_report(report: &MetricsReport) -> Self {
        Self {
            seed: report.seed,
            policy: report.policy.clone(),
            mean_lost_utility: report.mean_lost_utility,
            mean_lost_effective_utility: report.mean_lost_effective_utility,
            cluster_violation_rate: report.cluster_violation_rate,
            mean_cluster_utility: report.mean_cluster_utility(),
            degraded_cycles: report.degraded_cycles,
            starved_upscales: report.starved_upscales,
            conservation_ok: report.conservation_holds(),
            jobs: report
                .jobs
                .iter()
                .map(|j| JobSummary {
                    id: j.id.clone(),
                    slo_violation_rate: j.slo_violation_rate,
                    mean_utility: j.mean_utility,
                    mean_effective_utility: j.mean_effective_utility,
                    arrivals: j.arrivals,
                    completions: j.completions,
                    tail_drops: j.tail_drops,
                    explicit_drops: j.explicit_drops,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub scenario: ScenarioConfig,
    pub policy: String,
    pub trials: Vec<TrialSummary>,
    pub mean_lost_utility: f64,
    pub sd_lost_utility: f64,
    pub mean_lost_effective_utility: f64,
    pub mean_violation_rate: f64,
    pub sd_violation_rate: f64,
    pub mean_cluster_utility: f64,
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl AggregateReport {
    pub fn build(scenario: &ScenarioConfig, policy: &str, trials: Vec<TrialSummary>) -> Self {
        let lost: Vec<f64> = trials.iter().map(|t| t.mean_lost_utility).collect();
        let lost_eu: Vec<f64> = trials
            .iter()
            .map(|t| t.mean_lost_effective_utility)
            .collect();
        let viol: Vec<f64> = trials.iter().map(|t| t.cluster_violation_rate).collect();
        let util: Vec<f64> = trials.iter().map(|t| t.mean_cluster_utility).collect();
        let (mean_lost, sd_lost) = mean_sd(&lost);
        let (mean_lost_eu, _) = mean_sd(&lost_eu);
        let (mean_viol, sd_viol) = mean_sd(&viol);
        let (mean_util, _) = mean_sd(&util);
        Self {
            scenario: scenario.clone(),
            policy: policy.to_string(),
            trials,
            mean_lost_utility: mean_lost,
            sd_lost_utility: sd_lost,
            mean_lost_effective_utility: mean_lost_eu,
            mean_violation_rate: mean_viol,
            sd_violation_rate: sd_viol,
            mean_cluster_utility: mean_util,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading report {}", path.display()))?;
        serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Formats a float for CSV: empty for None, `inf` for infinite.
fn csv_float(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x.is_infinite() => "inf".to_string(),
        Some(x) => format!("{x:.6}"),
    }
}

/// Writes the per-minute per-job timeline of one trial.
pub fn write_timeline_csv(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut out = String::new();
    out.push_str(
        "minute,job,arrivals,tail_drops,explicit_drops,recorded,satisfied,\
         p99_s,p99_served_s,utility,effective_utility,planned_replicas,ready_replicas\n",
    );
    for job in &report.jobs {
        for m in &job.minutes {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{:.6},{:.6},{},{}\n",
                m.minute,
                job.id,
                m.arrivals,
                m.tail_drops,
                m.explicit_drops,
                m.recorded,
                m.satisfied,
                csv_float(m.p99),
                csv_float(m.p99_served),
                m.utility,
                m.effective_utility,
                m.planned_replicas,
                m.ready_replicas,
            ));
        }
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut raw = serde_json::to_string_pretty(value)?;
    raw.push('\n');
    write_atomic(path, raw.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut file =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    file.write_all(bytes)?;
    Ok(())
}

/// Standard layout for one policy's outputs under an output root.
pub fn policy_dir(out: &Path, scenario: &str, policy: &str) -> PathBuf {
    out.join(format!("{scenario}-{policy}"))
}
