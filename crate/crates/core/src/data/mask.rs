use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::TimeSeriesInstance;
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    #[default]
    PointRandom,
}

/// Which fraction of each series stays visible, and the seed that picks it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub observation_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub mode: MaskMode,
}

impl MaskSpec {
    pub fn new(observation_rate: f64, seed: u64) -> Self {
        Self {
            observation_rate,
            seed,
            mode: MaskMode::PointRandom,
        }
    }

    /// Spec for one series, derived from a base seed, the series id and the
    /// rate. Training and evaluation use this so a series is hidden the same
    /// way in both.
    pub fn for_series(observation_rate: f64, base_seed: u64, series_id: &str) -> Self {
        let seed = seeding::derive_seed(base_seed, series_id, &[observation_rate.to_bits()]);
        Self::new(observation_rate, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.observation_rate > 0.0 && self.observation_rate <= 1.0) {
            return Err(Error::contract(format!(
                "observation rate must be in (0, 1], got {}",
                self.observation_rate
            )));
        }
        Ok(())
    }
}

/// Keep `round(rate · T)` of the currently observed entries (at least one),
/// sampled uniformly without replacement. Values and timestamps are untouched.
pub fn apply_masking(instance: &TimeSeriesInstance, spec: &MaskSpec) -> Result<TimeSeriesInstance> {
    spec.validate()?;
    let observed: Vec<usize> = (0..instance.len()).filter(|&i| instance.mask[i]).collect();
    if observed.is_empty() {
        return Err(Error::contract(format!(
            "series `{}` has no observed entries to keep",
            instance.id
        )));
    }
    let target = (spec.observation_rate * instance.len() as f64).round() as usize;
    let keep = target.clamp(1, observed.len());
    let mut out = instance.clone();
    if keep == observed.len() {
        return Ok(out);
    }
    let mut rng = seeding::rng(spec.seed, "mask", &[]);
    out.mask.iter_mut().for_each(|m| *m = false);
    for k in index::sample(&mut rng, observed.len(), keep) {
        out.mask[observed[k]] = true;
    }
    Ok(out)
}

/// Positions visible in `original` but hidden in `masked`.
pub fn hidden_positions(original: &TimeSeriesInstance, masked: &TimeSeriesInstance) -> Vec<bool> {
    original.mask.iter().zip(&masked.mask).map(|(&o, &m)| o && !m).collect()
}
