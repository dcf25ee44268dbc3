use super::{loss_on_tape, Task, TaskOptions};
use crate::data::TimeSeriesInstance;
use crate::embedding::DelayConfig;
use crate::error::Result;
use crate::model::{init_params, ModelConfig, Weights};
use crate::tensor::{finite_diff_check, BackwardFault, GradCheckReport, Tensor};

/// Tolerance on the worst relative error of the pipeline check.
pub const PIPELINE_TOLERANCE: f64 = 1e-4;

/// Check the full training loss (normalization, a 4 × 4 delay grid,
/// modulated axis networks, core product and variation penalty) against
/// central differences, for every parameter group and the latent code.
/// `fault` corrupts one backward rule so the check can be seen to fail.
pub fn pipeline_gradcheck(fault: Option<BackwardFault>) -> Result<GradCheckReport> {
    let config = ModelConfig {
        layers: 2,
        hidden: 6,
        features_per_scale: 4,
        scales: vec![1.0, 4.0],
        layer_scales: vec![2.0, 1.0],
        row_rank: 3,
        col_rank: 2,
        latent_dim: 3,
        omega0: 1.0,
    };
    let params = init_params(&config, 17)?;
    let ts: Vec<f64> = (0..7).map(|i| i as f64 + 0.15 * (i as f64).sin()).collect();
    let values = ts.iter().map(|t| 12.0 + 2.0 * (0.8 * t).cos()).collect();
    let mask = vec![true, true, false, true, true, false, true];
    let inst = TimeSeriesInstance::new("toy", "toy", ts, values, mask)?;
    let options = TaskOptions {
        delay: Some(DelayConfig { m: 4, delta: 1 }),
        normalize: true,
    };
    let task = Task::from_series(&inst, &params.crf, &options)?;

    let mut named: Vec<(String, Tensor)> = (params.weights.named().into_iter())
        .map(|(n, t)| (n, t.clone()))
        .collect();
    named.push(("latent".into(), Tensor::row(vec![0.3, -0.2, 0.5])));
    let layout = params.weights.clone();
    finite_diff_check(
        |tape, vars| {
            if let Some(f) = fault {
                tape.inject_fault(f);
            }
            let mut it = vars.iter().copied();
            let w: Weights<_> = layout.map(|_, _| it.next().expect("one var per weight"));
            let phi = it.next().expect("latent var");
            loss_on_tape(tape, &w, &task, phi, 0.5)
        },
        &named,
        1e-6,
        PIPELINE_TOLERANCE,
    )
}
