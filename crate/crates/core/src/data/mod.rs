//! Irregular time series: ingestion, synthetic generation, masking,
//! masked instance normalization and z-normalized scoring.

mod csv_io;
mod mask;
mod metrics;
mod norm;
mod synth;

pub use csv_io::{load_csv, read_csv, write_csv, write_csv_to};
pub use mask::{apply_masking, hidden_positions, MaskMode, MaskSpec};
pub use metrics::{znorm_metrics, Metrics};
pub use norm::{denormalize, masked_instance_normalize, masked_stats, NormStats, DEFAULT_EPSILON};
pub use synth::{synth_generate, Range, SynthFamilyConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One irregularly sampled series. `mask[t]` is true where `values[t]` is
/// observed; unobserved values may hold anything (including NaN) and are
/// never read by the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesInstance {
    pub id: String,
    pub city: String,
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl TimeSeriesInstance {
    pub fn new(
        id: impl Into<String>,
        city: impl Into<String>,
        timestamps: Vec<f64>,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let inst = Self {
            id: id.into(),
            city: city.into(),
            timestamps,
            values,
            mask,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Fully observed series.
    pub fn observed(id: impl Into<String>, city: impl Into<String>, timestamps: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let mask = vec![true; values.len()];
        Self::new(id, city, timestamps, values, mask)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.timestamps.len();
        if self.values.len() != t || self.mask.len() != t {
            return Err(Error::Data(format!(
                "series `{}`: timestamps/values/mask lengths differ ({t}/{}/{})",
                self.id,
                self.values.len(),
                self.mask.len()
            )));
        }
        if t < 2 {
            return Err(Error::Data(format!("series `{}` has {t} samples, need at least 2", self.id)));
        }
        if self.timestamps.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data(format!("series `{}` has a non-finite timestamp", self.id)));
        }
        if let Some(w) = self.timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!(
                "series `{}`: timestamps not strictly increasing at index {}",
                self.id,
                w + 1
            )));
        }
        if let Some(i) = (0..t).find(|&i| self.mask[i] && !self.values[i].is_finite()) {
            return Err(Error::Data(format!("series `{}`: observed value at index {i} is not finite", self.id)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn require_observed(&self) -> Result<()> {
        if self.observed_count() == 0 {
            return Err(Error::contract(format!("series `{}` has no observed entries", self.id)));
        }
        Ok(())
    }

    /// Timestamps rescaled affinely onto `[0, 1]`.
    pub fn unit_times(&self) -> Vec<f64> {
        unit_interval(&self.timestamps)
    }
}

pub(crate) fn unit_interval(ts: &[f64]) -> Vec<f64> {
    let (lo, hi) = (ts[0], ts[ts.len() - 1]);
    let span = hi - lo;
    if span > 0.0 {
        ts.iter().map(|t| (t - lo) / span).collect()
    } else {
        vec![0.0; ts.len()]
    }
}

/// Group instances by city, keeping first-appearance order of cities and the
/// input order inside each city.
pub fn group_by_city(instances: &[TimeSeriesInstance]) -> Vec<(String, Vec<usize>)> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        match groups.iter_mut().find(|(c, _)| *c == inst.city) {
            Some((_, idx)) => idx.push(i),
            None => groups.push((inst.city.clone(), vec![i])),
        }
    }
    groups
}
