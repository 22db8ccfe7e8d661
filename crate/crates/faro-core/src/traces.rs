//! Trace ingestion and preparation.
//!
//! The canonical trace format is a two-column CSV `minute,count` with a
//! header row; minutes missing from the file are zero-filled. Loaded
//! series can be rescaled into a target rate range, compressed by window
//! averaging, and split into train/eval segments at day boundaries. A
//! small synthetic generator covers tests and bundled scenarios.

use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MINUTES_PER_DAY: usize = 1440;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace file: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace row {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace is empty")]
    Empty,
    #[error("series has {have} minutes, need {need}")]
    TooShort { have: usize, need: usize },
}

/// Per-interval arrival counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    /// Interval length in seconds.
    pub interval: f64,
    /// Requests per interval.
    pub values: Vec<f64>,
    /// Where the series came from (file path or generator tag).
    pub origin: String,
}

impl RateSeries {
    pub fn new(values: Vec<f64>, origin: &str) -> Self {
        Self {
            interval: 60.0,
            values,
            origin: origin.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Loads a `minute,count` CSV. Missing minutes become zeros; malformed
/// rows report their line number.
pub fn load_trace(path: &Path) -> Result<RateSeries, TraceError> {
    let raw = std::fs::read_to_string(path)?;
    parse_trace_csv(&raw, &path.display().to_string())
}

pub fn parse_trace_csv(raw: &str, origin: &str) -> Result<RateSeries, TraceError> {
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("minute")) {
            continue;
        }
        let mut fields = line.split(',');
        let minute: usize = fields
            .next()
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| TraceError::Malformed {
                line: idx + 1,
                message: format!("bad minute: {e}"),
            })?;
        let count: f64 = fields
            .next()
            .ok_or_else(|| TraceError::Malformed {
                line: idx + 1,
                message: "missing count column".into(),
            })?
            .trim()
            .parse()
            .map_err(|e| TraceError::Malformed {
                line: idx + 1,
                message: format!("bad count: {e}"),
            })?;
        if count < 0.0 {
            return Err(TraceError::Malformed {
                line: idx + 1,
                message: format!("negative count {count}"),
            });
        }
        rows.push((minute, count));
    }
    if rows.is_empty() {
        return Err(TraceError::Empty);
    }
    let max_minute = rows.iter().map(|&(m, _)| m).max().unwrap();
    let mut values = vec![0.0; max_minute + 1];
    for (minute, count) in rows {
        values[minute] = count;
    }
    Ok(RateSeries::new(values, origin))
}

/// Affine map of the series range onto `[lo, hi]`. A constant series (or
/// `lo == hi`) maps everywhere to `lo`.
pub fn rescale(series: &RateSeries, lo: f64, hi: f64) -> RateSeries {
    let min = series.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = series.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let values = if span <= 0.0 || hi <= lo {
        vec![lo; series.len()]
    } else {
        series
            .values
            .iter()
            .map(|&v| lo + (v - min) / span * (hi - lo))
            .collect()
    };
    RateSeries {
        interval: series.interval,
        values,
        origin: series.origin.clone(),
    }
}

/// Compresses the series by replacing each window with its mean. A partial
/// trailing window is averaged over its actual length.
pub fn window_average(series: &RateSeries, window: usize) -> RateSeries {
    let window = window.max(1);
    let values = series
        .values
        .chunks(window)
        .map(|chunk| chunk.iter().sum::<f64>() / chunk.len() as f64)
        .collect();
    RateSeries {
        interval: series.interval * window as f64,
        values,
        origin: series.origin.clone(),
    }
}

/// Splits a series into a training prefix and an evaluation suffix at day
/// boundaries.
pub fn split(
    series: &RateSeries,
    train_days: usize,
    eval_days: usize,
) -> Result<(RateSeries, RateSeries), TraceError> {
    let need = (train_days + eval_days) * MINUTES_PER_DAY;
    if series.len() < need {
        return Err(TraceError::TooShort {
            have: series.len(),
            need,
        });
    }
    let cut = train_days * MINUTES_PER_DAY;
    let train = RateSeries {
        interval: series.interval,
        values: series.values[..cut].to_vec(),
        origin: format!("{}:train", series.origin),
    };
    let eval = RateSeries {
        interval: series.interval,
        values: series.values[cut..cut + eval_days * MINUTES_PER_DAY].to_vec(),
        origin: format!("{}:eval", series.origin),
    };
    Ok((train, eval))
}

/// Synthetic trace shapes for tests and bundled scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SynthKind {
    Constant {
        rate: f64,
    },
    /// Diurnal-style wave: `mean + amplitude * sin(2*pi*(t/period + phase))`.
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period_minutes: f64,
        phase: f64,
    },
    /// Alternates between `low` and `high` every `half_period` minutes.
    Step {
        low: f64,
        high: f64,
        half_period_minutes: usize,
    },
    /// Poisson-timed bursts on top of a base rate.
    Spike {
        base: f64,
        magnitude: f64,
        spikes_per_hour: f64,
        spike_minutes: usize,
    },
    /// Production-style composite: a daily wave plus a secondary harmonic,
    /// multiplicative per-minute jitter, and occasional multi-minute
    /// bursts. Covers both smooth diurnal loads and spikier two-peak ones.
    Diurnal {
        mean: f64,
        daily_amplitude: f64,
        secondary_amplitude: f64,
        secondary_period_minutes: f64,
        phase: f64,
        /// Std of the multiplicative per-minute jitter.
        noise: f64,
        bursts_per_day: f64,
        /// Burst height as a multiple of `mean`.
        burst_magnitude: f64,
        burst_minutes: usize,
    },
}

/// Generates a synthetic series, deterministic per seed.
pub fn synth_trace(kind: &SynthKind, duration_minutes: usize, seed: u64) -> RateSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(duration_minutes);
    match kind {
        SynthKind::Constant { rate } => {
            values.resize(duration_minutes, rate.max(0.0));
        }
        SynthKind::Sinusoid {
            mean,
            amplitude,
            period_minutes,
            phase,
        } => {
            for t in 0..duration_minutes {
                let angle =
                    std::f64::consts::TAU * (t as f64 / period_minutes.max(1.0) + phase);
                values.push((mean + amplitude * angle.sin()).max(0.0));
            }
        }
        SynthKind::Step {
            low,
            high,
            half_period_minutes,
        } => {
            let half = (*half_period_minutes).max(1);
            for t in 0..duration_minutes {
                let v = if (t / half) % 2 == 0 { *low } else { *high };
                values.push(v.max(0.0));
            }
        }
        SynthKind::Spike {
            base,
            magnitude,
            spikes_per_hour,
            spike_minutes,
        } => {
            values.resize(duration_minutes, base.max(0.0));
            let per_minute = spikes_per_hour / 60.0;
            if per_minute > 0.0 {
                let poisson = Poisson::new(per_minute.max(1e-9)).unwrap();
                let mut t = 0usize;
                while t < duration_minutes {
                    let bursts: f64 = poisson.sample(&mut rng);
                    if bursts >= 1.0 {
                        let len = (*spike_minutes).max(1);
                        let boost = magnitude * (0.5 + rng.random::<f64>());
                        for dt in 0..len {
                            if t + dt < duration_minutes {
                                values[t + dt] += boost;
                            }
                        }
                    }
                    t += 1;
                }
            }
        }
        SynthKind::Diurnal {
            mean,
            daily_amplitude,
            secondary_amplitude,
            secondary_period_minutes,
            phase,
            noise,
            bursts_per_day,
            burst_magnitude,
            burst_minutes,
        } => {
            let normal = Normal::new(0.0, noise.max(0.0).max(1e-12)).unwrap();
            for t in 0..duration_minutes {
                let day = std::f64::consts::TAU * (t as f64 / 1440.0 + phase);
                let secondary = std::f64::consts::TAU
                    * (t as f64 / secondary_period_minutes.max(1.0) + 2.0 * phase);
                let shape = 1.0
                    + daily_amplitude * day.sin()
                    + secondary_amplitude * secondary.sin();
                let jitter = if *noise > 0.0 {
                    (1.0 + normal.sample(&mut rng)).max(0.1)
                } else {
                    1.0
                };
                values.push((mean * shape * jitter).max(0.0));
            }
            let per_minute = bursts_per_day / 1440.0;
            if per_minute > 0.0 {
                let poisson = Poisson::new(per_minute).unwrap();
                for t in 0..duration_minutes {
                    let hits: f64 = poisson.sample(&mut rng);
                    if hits >= 1.0 {
                        let boost = mean * burst_magnitude * (0.5 + rng.random::<f64>());
                        for dt in 0..(*burst_minutes).max(1) {
                            if t + dt < duration_minutes {
                                values[t + dt] += boost;
                            }
                        }
                    }
                }
            }
        }
    }
    RateSeries::new(values, &format!("synth:{kind:?}:seed{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_basic_and_gap_fill() {
        let s = parse_trace_csv("minute,count\n0,5\n1,7\n", "t").unwrap();
        assert_eq!(s.values, vec![5.0, 7.0]);
        let s = parse_trace_csv("minute,count\n0,5\n2,9\n", "t").unwrap();
        assert_eq!(s.values, vec![5.0, 0.0, 9.0]);
        assert!(matches!(parse_trace_csv("", "t"), Err(TraceError::Empty)));
        assert!(matches!(
            parse_trace_csv("minute,count\n0,x\n", "t"),
            Err(TraceError::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn rescale_range_and_degenerate() {
        let s = RateSeries::new(vec![0.0, 50.0, 100.0], "t");
        let r = rescale(&s, 1.0, 1600.0);
        assert_eq!(r.values[0], 1.0);
        assert_eq!(r.values[2], 1600.0);
        assert!((r.values[1] - 800.5).abs() < 1e-9);

        let flat = RateSeries::new(vec![42.0; 4], "t");
        assert_eq!(rescale(&flat, 1.0, 1600.0).values, vec![1.0; 4]);
        assert_eq!(rescale(&s, 7.0, 7.0).values, vec![7.0; 3]);
    }

    #[test]
    fn rescale_preserves_order_structure() {
        let s = RateSeries::new(vec![3.0, 9.0, 4.0, 12.0, 1.0], "t");
        let r = rescale(&s, 10.0, 100.0);
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(argmax(&s.values), argmax(&r.values));
        for w in s.values.windows(2).zip(r.values.windows(2)) {
            let (a, b) = w;
            assert_eq!(a[0] < a[1], b[0] < b[1]);
        }
    }

    #[test]
    fn window_average_examples() {
        let s = RateSeries::new(vec![4.0, 8.0, 0.0, 8.0], "t");
        assert_eq!(window_average(&s, 4).values, vec![5.0]);
        assert_eq!(window_average(&s, 1).values, s.values);
        let s6 = RateSeries::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 7.0], "t");
        let w = window_average(&s6, 4);
        assert_eq!(w.values, vec![2.5, 6.0]);
    }

    #[test]
    fn window_average_preserves_mean() {
        let s = RateSeries::new((0..40).map(|i| (i * 13 % 29) as f64).collect(), "t");
        let w = window_average(&s, 4);
        assert!((w.mean() - s.mean()).abs() < 1e-9);
    }

    #[test]
    fn split_day_boundaries() {
        let s = RateSeries::new(vec![1.0; 11 * MINUTES_PER_DAY], "t");
        let (train, eval) = split(&s, 10, 1).unwrap();
        assert_eq!(train.len(), 14400);
        assert_eq!(eval.len(), 1440);

        let two = RateSeries::new(vec![1.0; 2 * MINUTES_PER_DAY], "t");
        let (a, b) = split(&two, 1, 1).unwrap();
        assert_eq!(a.len(), b.len());

        let one = RateSeries::new(vec![1.0; MINUTES_PER_DAY], "t");
        assert!(split(&one, 10, 1).is_err());
    }

    #[test]
    fn synth_deterministic_and_bounded() {
        let kind = SynthKind::Sinusoid {
            mean: 800.0,
            amplitude: 700.0,
            period_minutes: 1440.0,
            phase: 0.25,
        };
        let a = synth_trace(&kind, 2880, 5);
        let b = synth_trace(&kind, 2880, 5);
        assert_eq!(a.values, b.values);
        assert!(a.values.iter().all(|&v| (100.0..=1500.0).contains(&v)));

        let c = synth_trace(&SynthKind::Constant { rate: 100.0 }, 60, 0);
        assert_eq!(c.values, vec![100.0; 60]);

        let spiky = synth_trace(
            &SynthKind::Spike {
                base: 50.0,
                magnitude: 400.0,
                spikes_per_hour: 2.0,
                spike_minutes: 3,
            },
            1440,
            11,
        );
        assert!(spiky.values.iter().any(|&v| v > 100.0));
        assert!(spiky.values.iter().all(|&v| v >= 50.0));
    }
}
