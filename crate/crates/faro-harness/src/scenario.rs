//! Scenario configuration: the JSON schema experiments are described in,
//! and its preparation into concrete jobs, traces, and policies.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use faro_core::{
    load_forecast_file, load_trace, rescale, synth_trace, window_average, DampedMeanPredictor,
    FilePredictor, JobSpec, OraclePredictor, RatePredictor, RateSeries, ResourceLimits,
    SeasonalNaivePredictor, Slo, SolverConfig, SynthKind,
};
use faro_sim::{
    derive_seed, AblationFlags, AiadPolicy, AutoscalerConfig, FairSharePolicy, FaroPolicy,
    MarkPolicy, OneshotPolicy, ScalingPolicy, SimConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    Fairshare,
    Oneshot,
    Aiad,
    Mark,
    FaroSum,
    FaroFair,
    FaroFairsum,
    FaroPenaltysum,
    FaroPenaltyfairsum,
}

impl PolicyName {
    pub fn all() -> [PolicyName; 9] {
        [
            PolicyName::Fairshare,
            PolicyName::Oneshot,
            PolicyName::Aiad,
            PolicyName::Mark,
            PolicyName::FaroSum,
            PolicyName::FaroFair,
            PolicyName::FaroFairsum,
            PolicyName::FaroPenaltysum,
            PolicyName::FaroPenaltyfairsum,
        ]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyName::Fairshare => "fairshare",
            PolicyName::Oneshot => "oneshot",
            PolicyName::Aiad => "aiad",
            PolicyName::Mark => "mark",
            PolicyName::FaroSum => "faro-sum",
            PolicyName::FaroFair => "faro-fair",
            PolicyName::FaroFairsum => "faro-fairsum",
            PolicyName::FaroPenaltysum => "faro-penaltysum",
            PolicyName::FaroPenaltyfairsum => "faro-penaltyfairsum",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::all()
            .into_iter()
            .find(|p| p.as_str() == s)
            .with_context(|| format!("unknown policy '{s}'"))
    }

    pub fn objective_kind(&self) -> Option<faro_core::ObjectiveKind> {
        use faro_core::ObjectiveKind::*;
        match self {
            PolicyName::FaroSum => Some(Sum),
            PolicyName::FaroFair => Some(Fair),
            PolicyName::FaroFairsum => Some(FairSum),
            PolicyName::FaroPenaltysum => Some(PenaltySum),
            PolicyName::FaroPenaltyfairsum => Some(PenaltyFairSum),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobConfig {
    pub id: String,
    /// Mean per-request processing time, seconds.
    pub service_time: f64,
    /// SLO target latency, seconds.
    pub slo_latency: f64,
    /// SLO percentile in (0, 1].
    pub slo_percentile: f64,
    #[serde(default = "one")]
    pub priority: f64,
    #[serde(default = "one")]
    pub cpu_per_replica: f64,
    #[serde(default = "one_gib")]
    pub mem_per_replica: f64,
    pub trace: TraceBinding,
}

fn one() -> f64 {
    1.0
}
fn one_gib() -> f64 {
    1e9
}

/// Where a job's arrival trace comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum TraceBinding {
    /// `minute,count` CSV on disk.
    File {
        path: PathBuf,
        #[serde(default)]
        rescale_to: Option<(f64, f64)>,
        #[serde(default)]
        window_average: Option<usize>,
    },
    /// Generated trace.
    Synth {
        kind: SynthKind,
        seed: u64,
        #[serde(default)]
        rescale_to: Option<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorConfig {
    DampedMean,
    SeasonalNaive { period: usize },
    /// Reads attached ground truth; optional multiplicative noise.
    Oracle {
        #[serde(default)]
        noise: f64,
    },
    /// Forecasts preloaded from a `job_id,step,mean,std` CSV.
    File { path: PathBuf },
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig::DampedMean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub initial_step: f64,
    pub group_count: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            max_iterations: d.max_iterations,
            initial_step: d.initial_step,
            group_count: d.group_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub jobs: Vec<JobConfig>,
    /// Total vCPUs available to replicas.
    pub max_cpu: f64,
    /// Total memory available to replicas, bytes.
    pub max_mem: f64,
    /// Policies to run; the CLI `--policy` flag narrows this to one.
    pub policies: Vec<PolicyName>,
    #[serde(default)]
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub ablation: AblationFlags,
    /// Base RNG seed; trial i runs with `seed + i`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Simulated evaluation length.
    pub duration_minutes: usize,
    /// Arrival-history minutes preloaded before evaluation starts.
    #[serde(default = "default_bootstrap")]
    pub bootstrap_minutes: usize,
    /// Relaxed-utility exponent used in optimization and reporting.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Utilization cap of the relaxed latency estimator.
    #[serde(default = "default_rho_max")]
    pub rho_max: f64,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default = "default_tail_drop")]
    pub tail_drop_threshold: usize,
    #[serde(default = "default_cold_start")]
    pub cold_start_delay: f64,
    #[serde(default)]
    pub autoscaler: Option<AutoscalerConfig>,
}

fn default_trials() -> usize {
    1
}
fn default_bootstrap() -> usize {
    30
}
fn default_alpha() -> f64 {
    4.0
}
fn default_rho_max() -> f64 {
    0.95
}
fn default_tail_drop() -> usize {
    50
}
fn default_cold_start() -> f64 {
    60.0
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading scenario {}", path.display()))?;
        let config: ScenarioConfig =
            serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs.is_empty() {
            bail!("scenario has no jobs");
        }
        if self.policies.is_empty() {
            bail!("scenario lists no policies");
        }
        if self.trials == 0 {
            bail!("trial count must be >= 1");
        }
        if self.duration_minutes == 0 {
            bail!("duration must be >= 1 minute");
        }
        for job in &self.jobs {
            if job.service_time <= 0.0 || job.slo_latency <= 0.0 {
                bail!("job {}: service time and SLO must be positive", job.id);
            }
            if !(0.0..=1.0).contains(&job.slo_percentile) || job.slo_percentile == 0.0 {
                bail!("job {}: percentile must be in (0, 1]", job.id);
            }
        }
        Ok(())
    }

    pub fn limits(&self) -> ResourceLimits {
        ResourceLimits {
            max_cpu: self.max_cpu,
            max_mem: self.max_mem,
        }
    }

    pub fn job_specs(&self) -> Vec<JobSpec> {
        self.jobs
            .iter()
            .map(|j| JobSpec {
                id: j.id.clone(),
                service_time: j.service_time,
                slo: Slo::new(j.slo_latency, j.slo_percentile).expect("validated"),
                priority: j.priority,
                cpu_per_replica: j.cpu_per_replica,
                mem_per_replica: j.mem_per_replica,
            })
            .collect()
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            max_iterations: self.solver.max_iterations,
            initial_step: self.solver.initial_step,
            group_count: self.solver.group_count,
            seed: 0,
        }
    }

    pub fn autoscaler_config(&self) -> AutoscalerConfig {
        let mut auto = self.autoscaler.unwrap_or_default();
        auto.cold_start_delay = self.cold_start_delay;
        auto
    }

    pub fn sim_config(&self, trial_seed: u64) -> SimConfig {
        let mut sim = SimConfig::new(
            self.duration_minutes as f64 * 60.0,
            trial_seed,
            self.limits(),
        );
        sim.tail_drop_threshold = self.tail_drop_threshold;
        sim.cold_start_delay = self.cold_start_delay;
        sim
    }
}

/// Concrete per-run data derived from a scenario.
pub struct PreparedScenario {
    pub jobs: Vec<JobSpec>,
    /// Evaluation traces, one per job, `duration_minutes` long.
    pub eval: Vec<RateSeries>,
    /// Bootstrap history per job (may be empty vectors).
    pub bootstrap: Vec<Vec<f64>>,
    /// Bootstrap + eval, the oracle predictor's ground truth.
    pub full: Vec<RateSeries>,
}

pub fn prepare(config: &ScenarioConfig) -> Result<PreparedScenario> {
    let need = config.bootstrap_minutes + config.duration_minutes;
    let mut eval = Vec::with_capacity(config.jobs.len());
    let mut bootstrap = Vec::with_capacity(config.jobs.len());
    let mut full = Vec::with_capacity(config.jobs.len());
    for job in &config.jobs {
        let series = match &job.trace {
            TraceBinding::File {
                path,
                rescale_to,
                window_average: window,
            } => {
                let mut s = load_trace(path)?;
                if let Some(w) = window {
                    s = window_average(&s, *w);
                }
                if let Some((lo, hi)) = rescale_to {
                    s = rescale(&s, *lo, *hi);
                }
                s
            }
            TraceBinding::Synth {
                kind,
                seed,
                rescale_to,
            } => {
                let mut s = synth_trace(kind, need, *seed);
                if let Some((lo, hi)) = rescale_to {
                    s = rescale(&s, *lo, *hi);
                }
                s
            }
        };
        if series.len() < need {
            bail!(
                "job {}: trace has {} minutes, scenario needs {need}",
                job.id,
                series.len()
            );
        }
        let b = series.values[..config.bootstrap_minutes].to_vec();
        let e = RateSeries {
            interval: series.interval,
            values: series.values[config.bootstrap_minutes..need].to_vec(),
            origin: format!("{}:eval", series.origin),
        };
        let f = RateSeries {
            interval: series.interval,
            values: series.values[..need].to_vec(),
            origin: series.origin.clone(),
        };
        bootstrap.push(b);
        eval.push(e);
        full.push(f);
    }
    Ok(PreparedScenario {
        jobs: config.job_specs(),
        eval,
        bootstrap,
        full,
    })
}

fn build_predictors(
    config: &ScenarioConfig,
    prepared: &PreparedScenario,
    trial_seed: u64,
) -> Result<Vec<Box<dyn RatePredictor>>> {
    let n = config.jobs.len();
    let mut out: Vec<Box<dyn RatePredictor>> = Vec::with_capacity(n);
    match &config.predictor {
        PredictorConfig::DampedMean => {
            for _ in 0..n {
                out.push(Box::new(DampedMeanPredictor::default()));
            }
        }
        PredictorConfig::SeasonalNaive { period } => {
            for _ in 0..n {
                out.push(Box::new(SeasonalNaivePredictor { period: *period }));
            }
        }
        PredictorConfig::Oracle { noise } => {
            for (i, series) in prepared.full.iter().enumerate() {
                out.push(Box::new(OraclePredictor::new(
                    series.clone(),
                    *noise,
                    derive_seed(trial_seed, 0x0C, i as u64, 0),
                )));
            }
        }
        PredictorConfig::File { path } => {
            let tables: HashMap<_, _> = load_forecast_file(path)?;
            for job in &config.jobs {
                let table = tables
                    .get(&job.id)
                    .with_context(|| format!("forecast file has no rows for job {}", job.id))?;
                out.push(Box::new(FilePredictor::from_table(table.clone())));
            }
        }
    }
    Ok(out)
}

/// Instantiates the policy a trial runs with.
pub fn build_policy(
    name: PolicyName,
    config: &ScenarioConfig,
    prepared: &PreparedScenario,
    trial_seed: u64,
) -> Result<Box<dyn ScalingPolicy>> {
    let n = config.jobs.len();
    Ok(match name {
        PolicyName::Fairshare => Box::new(FairSharePolicy::new(&prepared.jobs, &config.limits())?),
        PolicyName::Oneshot => Box::new(OneshotPolicy::new(n)),
        PolicyName::Aiad => Box::new(AiadPolicy::new(n)),
        PolicyName::Mark => Box::new(MarkPolicy::new(build_predictors(
            config, prepared, trial_seed,
        )?)),
        faro => {
            let kind = faro.objective_kind().expect("faro policy");
            Box::new(FaroPolicy::new(
                kind,
                config.ablation,
                build_predictors(config, prepared, trial_seed)?,
                config.solver_config(),
            ))
        }
    })
}
