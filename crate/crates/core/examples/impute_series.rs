// Adapt a trained model to one sparsely observed series and fill its gaps.

use std::path::Path;

use metatsi::cli::CliConfig;
use metatsi::data::{hidden_positions, synth_generate, znorm_metrics};
use metatsi::eval::{baseline_linear_interp, baseline_mean, protocol_mask};
use metatsi::meta::{infer_adapt, train};

pub fn run() -> metatsi::Result<()> {
    let config = CliConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/small.json"))?;
    let family = synth_generate(&config.synth)?;
    let (fit, target) = family.split_at(family.len() - 1);
    let masked: Vec<_> = fit.iter().map(|s| protocol_mask(s, 0.3, 0)).collect::<Result<_, _>>()?;
    let model = train(&masked, &config.train)?.last;

    let target = &target[0];
    let sparse = protocol_mask(target, 0.2, 0)?;
    let hidden = hidden_positions(target, &sparse);
    let (phi, filled) = infer_adapt(&sparse, &model.params, &model.config, false)?;
    println!("{}: {} of {} points visible, latent |phi|_inf = {:.3}",
        target.id,
        sparse.mask.iter().filter(|&&m| m).count(),
        target.len(),
        phi.values.iter().map(|v| v.abs()).fold(0.0, f64::max));

    for (name, pred) in [
        ("mean", baseline_mean(&sparse)?),
        ("linear", baseline_linear_interp(&sparse)?),
        ("metatsi", filled.clone()),
    ] {
        let m = znorm_metrics(&pred, &target.values, &hidden)?;
        println!("  {name:<8} z-MAE {:.4}  z-MSE {:.4}", m.mae, m.mse);
    }
    for k in (0..target.len()).step_by(target.len() / 8) {
        let flag = if sparse.mask[k] { "observed" } else { "imputed" };
        println!("  t={:7.2}  truth {:8.3}  output {:8.3}  ({flag})", target.timestamps[k], target.values[k], filled[k]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
