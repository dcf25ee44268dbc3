// Meta-train a small model on a masked synthetic family, save it and load
// it back bit-for-bit.

use metatsi::data::{synth_generate, Range, SynthFamilyConfig};
use metatsi::eval::protocol_mask;
use metatsi::meta::{load_checkpoint, save_checkpoint, train, TrainConfig};
use metatsi::model::ModelConfig;

pub fn run() -> metatsi::Result<()> {
    let family = synth_generate(&SynthFamilyConfig {
        n_cities: 2,
        series_per_city: 4,
        length_range: Range::new(60, 80),
        ..Default::default()
    })?;
    let masked: Vec<_> = family.iter().map(|s| protocol_mask(s, 0.3, 0)).collect::<Result<_, _>>()?;

    let config = TrainConfig {
        model: ModelConfig {
            layers: 2,
            hidden: 24,
            features_per_scale: 8,
            scales: vec![0.1, 1.0, 10.0],
            layer_scales: vec![5.0, 1.0],
            row_rank: 6,
            col_rank: 6,
            latent_dim: 8,
            omega0: 1.0,
        },
        inner_lr: 0.05,
        outer_lr: 2e-3,
        inner_steps: 3,
        batch_size: 4,
        epochs: 6,
        ..Default::default()
    };
    let outcome = train(&masked, &config)?;
    for log in &outcome.history {
        let val = log.val_mae.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        println!("epoch {:>2}  train loss {:.4}  val z-MAE {val}", log.epoch, log.train_loss);
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("checkpoint.bin");
    save_checkpoint(&path, &outcome.last)?;
    let restored = load_checkpoint(&path)?;
    println!(
        "checkpoint: {} bytes, epoch {}, digest {}",
        std::fs::metadata(&path)?.len(),
        restored.epoch,
        &restored.weights_digest()[..16]
    );
    assert_eq!(restored.weights_digest(), outcome.last.weights_digest());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
