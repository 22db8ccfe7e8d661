//! Probabilistic arrival-rate forecasting.
//!
//! Every predictor emits per-step Gaussian parameters for the next `w`
//! intervals; the autoscaler samples whole trajectories from them so load
//! fluctuation survives into the objective instead of collapsing to a
//! point estimate. Neural forecasters stay out of the repo: their output
//! loads through the forecast-file interface (`job_id,step,mean,std` CSV),
//! interchangeable with any bundled predictor.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::traces::RateSeries;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("forecast file: {0}")]
    Io(#[from] std::io::Error),
    #[error("forecast file line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Trailing arrival-rate observations at a fixed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateHistory {
    /// Interval length in seconds; one minute matches trace granularity.
    pub interval: f64,
    /// Requests per interval, oldest first.
    pub rates: Vec<f64>,
}

impl RateHistory {
    pub fn new(rates: Vec<f64>) -> Self {
        Self {
            interval: 60.0,
            rates,
        }
    }
}

/// Per-step Gaussian forecast of future arrival rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticForecast {
    /// Requests per interval, one entry per future step.
    pub means: Vec<f64>,
    /// Standard deviation per step, >= 0.
    pub stds: Vec<f64>,
}

impl ProbabilisticForecast {
    pub fn horizon(&self) -> usize {
        self.means.len()
    }

    pub fn point(means: Vec<f64>) -> Self {
        let stds = vec![0.0; means.len()];
        Self { means, stds }
    }
}

/// A forecaster for one job. `now_step` is the index of the last observed
/// interval in the job's full timeline; bundled statistical predictors
/// ignore it, the oracle and file predictors use it to look up the future.
pub trait RatePredictor: Send {
    fn forecast(&mut self, history: &RateHistory, now_step: usize, horizon: usize)
        -> ProbabilisticForecast;
}

/// Exponentially damped mean with residual-spread Gaussian noise.
///
/// The point forecast is flat at the damped mean of the trailing window;
/// the per-step std widens with sqrt(h) like a random walk, estimated from
/// one-step-ahead residuals. Falls back to last-value with the global
/// spread when the window is too short.
pub struct DampedMeanPredictor {
    pub damping: f64,
    pub window: usize,
}

impl Default for DampedMeanPredictor {
    fn default() -> Self {
        Self {
            damping: 0.8,
            window: 15,
        }
    }
}

fn damped_mean(rates: &[f64], damping: f64) -> f64 {
    let mut weight = 1.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for &r in rates.iter().rev() {
        num += weight * r;
        den += weight;
        weight *= damping;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

impl RatePredictor for DampedMeanPredictor {
    fn forecast(
        &mut self,
        history: &RateHistory,
        _now_step: usize,
        horizon: usize,
    ) -> ProbabilisticForecast {
        let rates = &history.rates;
        let tail_start = rates.len().saturating_sub(self.window);
        let window = &rates[tail_start..];
        if window.len() < 3 {
            // Too little signal: last value, spread from whatever we have.
            let last = rates.last().copied().unwrap_or(0.0);
            let n = rates.len() as f64;
            let std = if rates.len() >= 2 {
                let mean = rates.iter().sum::<f64>() / n;
                (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt()
            } else {
                0.0
            };
            return ProbabilisticForecast {
                means: vec![last.max(0.0); horizon],
                stds: vec![std; horizon],
            };
        }
        let mean = damped_mean(window, self.damping).max(0.0);
        // One-step-ahead residuals inside the window.
        let mut sq = 0.0;
        let mut count = 0usize;
        for t in 1..window.len() {
            let pred = damped_mean(&window[..t], self.damping);
            sq += (window[t] - pred).powi(2);
            count += 1;
        }
        let std1 = (sq / count as f64).sqrt();
        ProbabilisticForecast {
            means: vec![mean; horizon],
            stds: (1..=horizon).map(|h| std1 * (h as f64).sqrt()).collect(),
        }
    }
}

/// Repeats the last observed period; residual spread against the previous
/// period supplies the noise. Falls back to last-value when fewer than one
/// full period has been observed.
pub struct SeasonalNaivePredictor {
    pub period: usize,
}

impl RatePredictor for SeasonalNaivePredictor {
    fn forecast(
        &mut self,
        history: &RateHistory,
        now_step: usize,
        horizon: usize,
    ) -> ProbabilisticForecast {
        let rates = &history.rates;
        if rates.len() < self.period || self.period == 0 {
            let mut fallback = DampedMeanPredictor::default();
            return fallback.forecast(history, now_step, horizon);
        }
        let season = &rates[rates.len() - self.period..];
        let means: Vec<f64> = (0..horizon)
            .map(|h| season[h % self.period].max(0.0))
            .collect();
        // Seasonal residuals: this period vs the one before it.
        let std = if rates.len() >= 2 * self.period {
            let prev = &rates[rates.len() - 2 * self.period..rates.len() - self.period];
            let sq: f64 = season
                .iter()
                .zip(prev)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / self.period as f64;
            sq.sqrt()
        } else {
            0.0
        };
        ProbabilisticForecast {
            stds: vec![std; means.len()],
            means,
        }
    }
}

/// Reads the attached ground-truth series; std is zero. Optional
/// multiplicative noise perturbs the means deterministically per seed.
pub struct OraclePredictor {
    truth: RateSeries,
    noise: f64,
    rng: ChaCha8Rng,
}

impl OraclePredictor {
    pub fn new(truth: RateSeries, noise: f64, seed: u64) -> Self {
        Self {
            truth,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl RatePredictor for OraclePredictor {
    fn forecast(
        &mut self,
        _history: &RateHistory,
        now_step: usize,
        horizon: usize,
    ) -> ProbabilisticForecast {
        let values = &self.truth.values;
        let means: Vec<f64> = (1..=horizon)
            .map(|h| {
                let idx = (now_step + h).min(values.len().saturating_sub(1));
                let truth = values.get(idx).copied().unwrap_or(0.0);
                if self.noise > 0.0 {
                    let normal = Normal::new(0.0, self.noise).unwrap();
                    (truth * (1.0 + normal.sample(&mut self.rng))).max(0.0)
                } else {
                    truth
                }
            })
            .collect();
        ProbabilisticForecast::point(means)
    }
}

/// Forecasts preloaded from a `job_id,step,mean,std` CSV, keyed by the
/// absolute step the forecast applies to. Steps missing from the file fall
/// back to the last observed rate.
pub struct FilePredictor {
    table: BTreeMap<usize, (f64, f64)>,
}

impl FilePredictor {
    pub fn from_table(table: BTreeMap<usize, (f64, f64)>) -> Self {
        Self { table }
    }
}

impl RatePredictor for FilePredictor {
    fn forecast(
        &mut self,
        history: &RateHistory,
        now_step: usize,
        horizon: usize,
    ) -> ProbabilisticForecast {
        let last = history.rates.last().copied().unwrap_or(0.0);
        let mut means = Vec::with_capacity(horizon);
        let mut stds = Vec::with_capacity(horizon);
        for h in 1..=horizon {
            match self.table.get(&(now_step + h)) {
                Some(&(m, s)) => {
                    means.push(m.max(0.0));
                    stds.push(s.max(0.0));
                }
                None => {
                    means.push(last);
                    stds.push(0.0);
                }
            }
        }
        ProbabilisticForecast { means, stds }
    }
}

/// Parses a forecast file: header `job_id,step,mean,std`, one row per job
/// per future step.
pub fn load_forecast_file(
    path: &Path,
) -> Result<HashMap<String, BTreeMap<usize, (f64, f64)>>, PredictorError> {
    let mut raw = String::new();
    std::fs::File::open(path)?.read_to_string(&mut raw)?;
    parse_forecast_csv(&raw)
}

pub fn parse_forecast_csv(
    raw: &str,
) -> Result<HashMap<String, BTreeMap<usize, (f64, f64)>>, PredictorError> {
    let mut out: HashMap<String, BTreeMap<usize, (f64, f64)>> = HashMap::new();
    for (idx, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("job_id")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(PredictorError::Malformed {
                line: idx + 1,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let step: usize = fields[1].trim().parse().map_err(|e| PredictorError::Malformed {
            line: idx + 1,
            message: format!("bad step: {e}"),
        })?;
        let mean: f64 = fields[2].trim().parse().map_err(|e| PredictorError::Malformed {
            line: idx + 1,
            message: format!("bad mean: {e}"),
        })?;
        let std: f64 = fields[3].trim().parse().map_err(|e| PredictorError::Malformed {
            line: idx + 1,
            message: format!("bad std: {e}"),
        })?;
        out.entry(fields[0].trim().to_string())
            .or_default()
            .insert(step, (mean, std));
    }
    Ok(out)
}

/// Draws `count` trajectories from the per-step Gaussians, clamped at zero.
/// Deterministic for a fixed seed. Returns `[sample][step]` rates.
pub fn sample_trajectories(
    forecast: &ProbabilisticForecast,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count.max(1));
    for _ in 0..count.max(1) {
        let mut traj = Vec::with_capacity(forecast.horizon());
        for (m, s) in forecast.means.iter().zip(&forecast.stds) {
            let value = if *s > 0.0 {
                Normal::new(*m, *s).unwrap().sample(&mut rng)
            } else {
                *m
            };
            traj.push(value.max(0.0));
        }
        out.push(traj);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn damped_mean_constant_history() {
        let mut p = DampedMeanPredictor::default();
        let history = RateHistory::new(vec![120.0; 15]);
        let f = p.forecast(&history, 14, 7);
        assert_eq!(f.horizon(), 7);
        for &m in &f.means {
            assert!((m - 120.0).abs() < 1e-9);
        }
        for &s in &f.stds {
            assert!(s.abs() < 1e-9);
        }
    }

    #[test]
    fn damped_mean_insufficient_history_falls_back() {
        let mut p = DampedMeanPredictor::default();
        let history = RateHistory::new(vec![80.0, 100.0]);
        let f = p.forecast(&history, 1, 3);
        assert_eq!(f.means, vec![100.0, 100.0, 100.0]);
        assert!(f.stds[0] > 0.0);
    }

    #[test]
    fn oracle_reads_truth() {
        let truth = RateSeries::new((0..20).map(|i| i as f64 * 10.0).collect(), "t");
        let mut p = OraclePredictor::new(truth, 0.0, 1);
        let history = RateHistory::new(vec![0.0; 5]);
        let f = p.forecast(&history, 4, 3);
        assert_eq!(f.means, vec![50.0, 60.0, 70.0]);
        assert_eq!(f.stds, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn seasonal_naive_repeats_last_period() {
        let mut p = SeasonalNaivePredictor { period: 7 };
        let ramp: Vec<f64> = (0..21).map(|i| i as f64).collect();
        let history = RateHistory::new(ramp);
        let f = p.forecast(&history, 20, 7);
        let expect: Vec<f64> = (14..21).map(|i| i as f64).collect();
        assert_eq!(f.means, expect);
    }

    #[test]
    fn sampling_deterministic_and_clamped() {
        let f = ProbabilisticForecast {
            means: vec![1.0; 5],
            stds: vec![10.0; 5],
        };
        let a = sample_trajectories(&f, 50, 9);
        let b = sample_trajectories(&f, 50, 9);
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|&r| r >= 0.0));

        let point = ProbabilisticForecast::point(vec![4.0; 3]);
        let s = sample_trajectories(&point, 10, 0);
        assert!(s.iter().all(|t| t == &vec![4.0; 3]));
    }

    #[test]
    fn sample_mean_tracks_forecast_mean() {
        let f = ProbabilisticForecast {
            means: vec![200.0; 4],
            stds: vec![20.0; 4],
        };
        let s = 1000usize;
        let trajs = sample_trajectories(&f, s, 123);
        for step in 0..4 {
            let mean: f64 = trajs.iter().map(|t| t[step]).sum::<f64>() / s as f64;
            let bound = 3.0 * 20.0 / (s as f64).sqrt();
            assert!(
                (mean - 200.0).abs() <= bound,
                "step {step}: {mean} outside {bound}"
            );
        }
    }

    #[test]
    fn forecast_file_roundtrip() {
        let raw = "job_id,step,mean,std\nj0,5,100.5,3.0\nj0,6,110.0,4.0\nj1,5,20.0,0.0\n";
        let table = parse_forecast_csv(raw).unwrap();
        let mut p = FilePredictor::from_table(table["j0"].clone());
        let history = RateHistory::new(vec![90.0; 4]);
        let f = p.forecast(&history, 4, 3);
        assert_eq!(f.means, vec![100.5, 110.0, 90.0]);
        assert_eq!(f.stds, vec![3.0, 4.0, 0.0]);

        assert!(parse_forecast_csv("job_id,step,mean,std\nbroken,row\n").is_err());
    }
}
