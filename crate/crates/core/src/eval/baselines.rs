//! Reference imputers that need no training.

use crate::data::TimeSeriesInstance;
use crate::error::Result;

/// Every position predicted as the mean of the observed values.
pub fn baseline_mean(instance: &TimeSeriesInstance) -> Result<Vec<f64>> {
    instance.require_observed()?;
    let (sum, n) = instance
        .values
        .iter()
        .zip(&instance.mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v, n + 1));
    Ok(vec![sum / n as f64; instance.len()])
}

/// Piecewise-linear interpolation in timestamp between the nearest observed
/// neighbours, held constant before the first and after the last observation.
pub fn baseline_linear_interp(instance: &TimeSeriesInstance) -> Result<Vec<f64>> {
    instance.require_observed()?;
    let obs: Vec<usize> = (0..instance.len()).filter(|&i| instance.mask[i]).collect();
    let (t, v) = (&instance.timestamps, &instance.values);
    let mut out = Vec::with_capacity(instance.len());
    let mut next = 0;
    for i in 0..instance.len() {
        while next < obs.len() && obs[next] < i {
            next += 1;
        }
        let pred = match (next.checked_sub(1).map(|k| obs[k]), obs.get(next).copied()) {
            (_, Some(r)) if r == i => v[i],
            (Some(l), Some(r)) => {
                let w = (t[i] - t[l]) / (t[r] - t[l]);
                v[l] + w * (v[r] - v[l])
            }
            (Some(l), None) => v[l],
            (None, Some(r)) => v[r],
            (None, None) => unreachable!("at least one observation"),
        };
        out.push(pred);
    }
    Ok(out)
}
