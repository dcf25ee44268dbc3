use serde::{Deserialize, Serialize};

use super::TimeSeriesInstance;
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Statistics of the observed entries of one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub var: f64,
    pub epsilon: f64,
}

impl NormStats {
    /// Stats that leave values untouched (normalization disabled).
    pub fn identity() -> Self {
        Self {
            mean: 0.0,
            var: 1.0,
            epsilon: 0.0,
        }
    }

    pub fn scale(&self) -> f64 {
        (self.var + self.epsilon).sqrt()
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.scale()
    }

    pub fn denormalize(&self, p: f64) -> f64 {
        self.scale() * p + self.mean
    }
}

/// Mean and (population) variance over `mask`ed entries.
pub fn masked_stats(values: &[f64], mask: &[bool], epsilon: f64) -> Result<NormStats> {
    if !(epsilon >= 0.0) {
        return Err(Error::contract(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let observed: Vec<f64> = values.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
    if observed.is_empty() {
        return Err(Error::contract("masked normalization needs at least one observed entry"));
    }
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let var = observed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var + epsilon <= 0.0 {
        return Err(Error::numeric("zero variance with epsilon = 0; normalization undefined"));
    }
    Ok(NormStats { mean, var, epsilon })
}

/// Standardize every entry with statistics taken from the observed entries
/// only. Unobserved entries are transformed too but carry no information.
pub fn masked_instance_normalize(instance: &TimeSeriesInstance, epsilon: f64) -> Result<(TimeSeriesInstance, NormStats)> {
    let stats = masked_stats(&instance.values, &instance.mask, epsilon)
        .map_err(|e| e.context(format!("series `{}`", instance.id)))?;
    let mut out = instance.clone();
    out.values.iter_mut().for_each(|x| *x = stats.normalize(*x));
    Ok((out, stats))
}

pub fn denormalize(predictions: &[f64], stats: &NormStats) -> Vec<f64> {
    predictions.iter().map(|&p| stats.denormalize(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inst(values: Vec<f64>, mask: Vec<bool>) -> TimeSeriesInstance {
        let ts = (0..values.len()).map(|i| i as f64).collect();
        TimeSeriesInstance::new("s", "c", ts, values, mask).unwrap()
    }

    #[test]
    fn hand_evaluated_example() {
        let (n, s) = masked_instance_normalize(&inst(vec![2.0, 4.0, 6.0], vec![true, true, false]), 0.0).unwrap();
        assert_eq!((s.mean, s.var), (3.0, 1.0));
        assert_eq!(n.values, vec![-1.0, 1.0, 3.0]);
    }

    #[test]
    fn constant_series_is_finite_with_epsilon() {
        let (n, _) = masked_instance_normalize(&inst(vec![5.0; 4], vec![true; 4]), 1e-5).unwrap();
        assert!(n.values.iter().all(|&v| v == 0.0));
        assert!(masked_instance_normalize(&inst(vec![5.0; 4], vec![true; 4]), 0.0).is_err());
    }

    #[test]
    fn full_mask_matches_plain_z_score() {
        let x = vec![1.0, 7.0, -2.0, 4.0, 0.5];
        let (n, _) = masked_instance_normalize(&inst(x.clone(), vec![true; 5]), 0.0).unwrap();
        let mean = x.iter().sum::<f64>() / 5.0;
        let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0).sqrt();
        for (a, b) in n.values.iter().zip(&x) {
            assert!((a - (b - mean) / sd).abs() < 1e-14);
        }
    }

    #[test]
    fn no_observed_entries_is_a_contract_error() {
        let r = masked_instance_normalize(&inst(vec![1.0, 2.0], vec![false, false]), 1e-5);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn denormalize_examples() {
        let s = NormStats { mean: 3.0, var: 1.0, epsilon: 0.0 };
        assert_eq!(denormalize(&[-1.0, 1.0], &s), vec![2.0, 4.0]);
        assert_eq!(denormalize(&[0.0, 0.0], &s), vec![3.0, 3.0]);
    }

    proptest! {
        #[test]
        fn round_trip_and_moments(
            values in prop::collection::vec(-1e3f64..1e3, 2..60),
            bits in prop::collection::vec(any::<bool>(), 60),
        ) {
            let mut mask: Vec<bool> = bits[..values.len()].to_vec();
            mask[0] = true;
            let x = inst(values.clone(), mask.clone());
            let (n, s) = masked_instance_normalize(&x, DEFAULT_EPSILON).unwrap();
            let back = denormalize(&n.values, &s);
            for i in (0..values.len()).filter(|&i| mask[i]) {
                prop_assert!((back[i] - values[i]).abs() <= 1e-12 * values[i].abs().max(1.0));
            }
            let obs: Vec<f64> = (0..values.len()).filter(|&i| mask[i]).map(|i| n.values[i]).collect();
            let m = obs.iter().sum::<f64>() / obs.len() as f64;
            let v = obs.iter().map(|z| (z - m).powi(2)).sum::<f64>() / obs.len() as f64;
            prop_assert!(m.abs() <= 1e-10);
            prop_assert!((v - s.var / (s.var + s.epsilon)).abs() <= 1e-10);
        }
    }
}
