// Export adapted latent codes to CSV and draw imputations as SVG.

use std::path::Path;

use metatsi::cli::CliConfig;
use metatsi::data::synth_generate;
use metatsi::eval::{baseline_linear_interp, export_latents, plot_series_svg, protocol_mask};
use metatsi::meta::{impute, train};

pub fn run() -> metatsi::Result<()> {
    let config = CliConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/small.json"))?;
    let family = synth_generate(&config.synth)?;
    let masked: Vec<_> = family.iter().map(|s| protocol_mask(s, 0.3, 0)).collect::<Result<_, _>>()?;
    let model = train(&masked, &config.train)?.last;

    let dir = tempfile::tempdir()?;
    let latents = export_latents(&family, &model, 0.3, 0, dir.path().join("latents.csv"))?;
    println!("{} latent codes of dimension {}", latents.len(), latents[0].dim());
    let text = std::fs::read_to_string(dir.path().join("latents.csv"))?;
    println!("{}", text.lines().next().unwrap_or_default());

    for (series, visible) in family.iter().zip(&masked).take(2) {
        let (phi, _) = metatsi::meta::infer_adapt(visible, &model.params, &model.config, false)?;
        let predictions = vec![
            ("linear".to_string(), baseline_linear_interp(visible)?),
            ("metatsi".to_string(), impute(visible, &phi, &model.params, &model.config, false)?),
        ];
        let path = dir.path().join(format!("{}.svg", series.id));
        plot_series_svg(series, &visible.mask, &predictions, &path)?;
        println!("wrote {} ({} bytes)", path.file_name().unwrap().to_string_lossy(), std::fs::metadata(&path)?.len());
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
