use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::TimeSeriesInstance;
use crate::error::{Error, Result};
use crate::seeding;

/// Inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T> {
    pub min: T,
    pub max: T,
}

impl<T> Range<T> {
    pub const fn new(min: T, max: T) -> Self {
        Self { min, max }
    }
}

/// Parameters of the synthetic multi-city family.
///
/// Each city draws a sampling interval, a length and a pool of periodic
/// components; its series share that pool with small per-series
/// perturbations of frequency, amplitude and phase, plus their own trend,
/// level, scale and noise:
///
/// `x(t) = level + scale · (Σₖ aₖ sin(2π fₖ (t − t₀) + ρₖ) + b (t − t₀) + noise)`
///
/// All series of a city share timestamps. Generation is a pure function of
/// the config; series `(c, s)` has its own seed stream, so enlarging
/// `series_per_city` only appends series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthFamilyConfig {
    pub n_cities: usize,
    pub series_per_city: usize,
    pub length_range: Range<usize>,
    pub frequency_count_range: Range<usize>,
    /// Sampling interval of a city, in abstract time units.
    pub interval_range: Range<f64>,
    /// Uniform timestamp jitter as a fraction of the interval (< 0.5).
    pub timestamp_jitter: f64,
    /// Component periods, measured in samples.
    pub period_range: Range<f64>,
    /// Relative std of the per-series frequency perturbation.
    pub frequency_jitter: f64,
    pub amplitude_range: Range<f64>,
    /// Log-normal std of per-series amplitude factors.
    pub amplitude_jitter: f64,
    /// Std (radians) of per-series phase offsets around the city phase.
    pub phase_jitter: f64,
    /// Std of the trend, in amplitude units per series span.
    pub trend_std: f64,
    pub noise_std: f64,
    pub level_range: Range<f64>,
    pub scale_range: Range<f64>,
    pub seed: u64,
}

impl Default for SynthFamilyConfig {
    fn default() -> Self {
        Self {
            n_cities: 6,
            series_per_city: 8,
            length_range: Range::new(190, 210),
            frequency_count_range: Range::new(2, 3),
            interval_range: Range::new(1.0, 5.0),
            timestamp_jitter: 0.1,
            period_range: Range::new(10.0, 48.0),
            frequency_jitter: 0.02,
            amplitude_range: Range::new(0.4, 1.2),
            amplitude_jitter: 0.15,
            phase_jitter: 0.3,
            trend_std: 0.3,
            noise_std: 0.05,
            level_range: Range::new(10.0, 500.0),
            scale_range: Range::new(0.5, 20.0),
            seed: 0,
        }
    }
}

impl SynthFamilyConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: &str| Err(Error::Config(format!("synth.{field}: {msg}")));
        if self.n_cities == 0 {
            return err("n_cities", "must be positive");
        }
        if self.series_per_city == 0 {
            return err("series_per_city", "must be positive");
        }
        if self.length_range.min < 2 || self.length_range.min > self.length_range.max {
            return err("length_range", "needs 2 <= min <= max");
        }
        if self.frequency_count_range.min > self.frequency_count_range.max {
            return err("frequency_count_range", "needs min <= max");
        }
        for (name, r) in [
            ("interval_range", self.interval_range),
            ("period_range", self.period_range),
            ("amplitude_range", self.amplitude_range),
            ("level_range", self.level_range),
            ("scale_range", self.scale_range),
        ] {
            if !(r.min.is_finite() && r.max.is_finite() && r.min <= r.max) {
                return err(name, "needs finite min <= max");
            }
        }
        if self.interval_range.min <= 0.0 {
            return err("interval_range", "must be positive");
        }
        if self.period_range.min <= 0.0 {
            return err("period_range", "must be positive");
        }
        if !(0.0..0.5).contains(&self.timestamp_jitter) {
            return err("timestamp_jitter", "must be in [0, 0.5)");
        }
        for (name, v) in [
            ("frequency_jitter", self.frequency_jitter),
            ("amplitude_jitter", self.amplitude_jitter),
            ("phase_jitter", self.phase_jitter),
            ("trend_std", self.trend_std),
            ("noise_std", self.noise_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return err(name, "must be a finite value >= 0");
            }
        }
        Ok(())
    }
}

struct Component {
    freq: f64,
    amplitude: f64,
    phase: f64,
}

fn uniform(rng: &mut impl Rng, r: Range<f64>) -> f64 {
    if r.min == r.max {
        r.min
    } else {
        rng.random_range(r.min..r.max)
    }
}

fn gauss(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn city_tag(c: usize) -> String {
    format!("city{c:02}")
}

pub fn series_id(c: usize, s: usize) -> String {
    format!("c{c:02}_s{s:03}")
}

pub fn synth_generate(config: &SynthFamilyConfig) -> Result<Vec<TimeSeriesInstance>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.n_cities * config.series_per_city);
    for c in 0..config.n_cities {
        let mut rng = seeding::rng(config.seed, "synth-city", &[c as u64]);
        let len = rng.random_range(config.length_range.min..=config.length_range.max);
        let dt = uniform(&mut rng, config.interval_range);
        let t0 = rng.random_range(0.0..100.0);
        let n_comp = rng.random_range(config.frequency_count_range.min..=config.frequency_count_range.max);
        let pool: Vec<Component> = (0..n_comp)
            .map(|_| Component {
                freq: 1.0 / (uniform(&mut rng, config.period_range) * dt),
                amplitude: uniform(&mut rng, config.amplitude_range),
                phase: rng.random_range(0.0..TAU),
            })
            .collect();
        let timestamps: Vec<f64> = (0..len)
            .map(|k| {
                let j = if config.timestamp_jitter > 0.0 {
                    rng.random_range(-config.timestamp_jitter..config.timestamp_jitter)
                } else {
                    0.0
                };
                t0 + (k as f64 + j) * dt
            })
            .collect();
        let span = timestamps[len - 1] - timestamps[0];

        for s in 0..config.series_per_city {
            let mut rng = seeding::rng(config.seed, "synth-series", &[c as u64, s as u64]);
            let comps: Vec<Component> = pool
                .iter()
                .map(|p| Component {
                    freq: p.freq * (1.0 + config.frequency_jitter * gauss(&mut rng)),
                    amplitude: p.amplitude * (config.amplitude_jitter * gauss(&mut rng)).exp(),
                    phase: p.phase + config.phase_jitter * gauss(&mut rng),
                })
                .collect();
            let slope = config.trend_std * gauss(&mut rng) / span;
            let level = uniform(&mut rng, config.level_range);
            let scale = uniform(&mut rng, config.scale_range);
            let values = timestamps
                .iter()
                .map(|&t| {
                    let tau = t - t0;
                    let periodic: f64 = comps
                        .iter()
                        .map(|k| k.amplitude * (TAU * k.freq * tau + k.phase).sin())
                        .sum();
                    let noise = if config.noise_std > 0.0 {
                        config.noise_std * gauss(&mut rng)
                    } else {
                        0.0
                    };
                    level + scale * (periodic + slope * tau + noise)
                })
                .collect();
            out.push(TimeSeriesInstance::observed(series_id(c, s), city_tag(c), timestamps.clone(), values)?);
        }
    }
    Ok(out)
}
