// Walk the straight line between two adapted latent codes and watch the
// decoded series morph from one to the other.

use std::path::Path;

use metatsi::cli::CliConfig;
use metatsi::data::synth_generate;
use metatsi::eval::protocol_mask;
use metatsi::meta::{inner_adapt, latent_interpolate, train, Task};
use metatsi::model::latent_lipschitz_bound;

pub fn run() -> metatsi::Result<()> {
    let config = CliConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/small.json"))?;
    let family = synth_generate(&config.synth)?;
    let masked: Vec<_> = family.iter().map(|s| protocol_mask(s, 0.3, 0)).collect::<Result<_, _>>()?;
    let model = train(&masked, &config.train)?.last;
    let (params, opts) = (&model.params, model.config.task_options());

    let first = Task::from_series(&masked[0], &params.crf, &opts)?;
    let last = Task::from_series(&masked[masked.len() - 1], &params.crf, &opts)?;
    let a = inner_adapt(&first, params, &model.config)?;
    let b = inner_adapt(&last, params, &model.config)?;

    let mut previous: Option<Vec<f64>> = None;
    for k in 0..=10 {
        let mu = k as f64 / 10.0;
        let decoded = latent_interpolate(&a, &b, mu, &first, params)?.remove(0);
        let jump = previous
            .as_ref()
            .map(|p| p.iter().zip(&decoded).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        let mean = decoded.iter().sum::<f64>() / decoded.len() as f64;
        match jump {
            Some(j) => println!("mu={mu:.1}  mean {mean:8.3}  max step {j:.4}"),
            None => println!("mu={mu:.1}  mean {mean:8.3}"),
        }
        previous = Some(decoded);
    }
    println!("latent Lipschitz bound on the segment: {:.3}", latent_lipschitz_bound(params, &a, &b)?);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
