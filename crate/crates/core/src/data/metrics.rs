use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mse: f64,
}

/// MAE and MSE on z-normalized values at `eval_mask` positions.
///
/// Both series are standardized with the mean and population standard
/// deviation of the ground truth, taken over every position where the truth
/// is known (finite). A constant truth falls back to unit scale.
pub fn znorm_metrics(predicted: &[f64], ground_truth: &[f64], eval_mask: &[bool]) -> Result<Metrics> {
    if predicted.len() != ground_truth.len() || eval_mask.len() != ground_truth.len() {
        return Err(Error::dim(format!(
            "metric inputs differ in length: {} / {} / {}",
            predicted.len(),
            ground_truth.len(),
            eval_mask.len()
        )));
    }
    let known: Vec<f64> = ground_truth.iter().copied().filter(|v| v.is_finite()).collect();
    let scored: Vec<usize> = (0..eval_mask.len()).filter(|&i| eval_mask[i]).collect();
    if scored.is_empty() {
        return Err(Error::contract("evaluation mask selects no positions"));
    }
    if scored.iter().any(|&i| !ground_truth[i].is_finite()) {
        return Err(Error::contract("evaluation mask covers positions without ground truth"));
    }
    let n = known.len() as f64;
    let mean = known.iter().sum::<f64>() / n;
    let sd = (known.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let (mut abs, mut sq) = (0.0, 0.0);
    for &i in &scored {
        let d = (predicted[i] - mean) / sd - (ground_truth[i] - mean) / sd;
        abs += d.abs();
        sq += d * d;
    }
    let k = scored.len() as f64;
    Ok(Metrics { mae: abs / k, mse: sq / k })
}
