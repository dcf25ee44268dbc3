// Initialize a small factorized INR, decode a grid at a random latent code
// and compare the certified Lipschitz bound with sampled difference quotients.

use metatsi::model::{crf_features, factorized_forward, init_params, lipschitz_bound, LatentCode, ModelConfig};

pub fn run() -> metatsi::Result<()> {
    let config = ModelConfig {
        layers: 2,
        hidden: 16,
        features_per_scale: 8,
        scales: vec![1.0, 10.0],
        layer_scales: vec![5.0, 1.0],
        row_rank: 4,
        col_rank: 4,
        latent_dim: 8,
        omega0: 1.0,
    };
    let params = init_params(&config, 3)?;
    println!("{} weights in {} arrays", params.weights.parameter_count(), params.weights.named().len());
    println!("feature vector at c=0.5 has {} entries", crf_features(0.5, &params.crf).len());

    let phi = LatentCode::new((0..8).map(|i| 0.1 * (i as f64 - 3.5)).collect())?;
    let rows: Vec<f64> = (0..5).map(|i| i as f64 / 4.0).collect();
    let cols: Vec<f64> = (0..3).map(|j| j as f64 / 2.0).collect();
    let grid = params.predict_grid(&params.grid_input(&rows, &cols)?, &phi)?;
    for row in grid.data().chunks(cols.len()) {
        println!("  {row:+.4?}");
    }

    let bound = lipschitz_bound(&params, &phi)?;
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let a = (k as f64 / 199.0, (k * 37 % 200) as f64 / 199.0);
        let b = ((a.0 + 0.013).min(1.0), (a.1 + 0.007).min(1.0));
        let dist = (a.0 - b.0).abs().max((a.1 - b.1).abs());
        if dist > 0.0 {
            let diff = factorized_forward(a.0, a.1, &phi, &params)? - factorized_forward(b.0, b.1, &phi, &params)?;
            worst = worst.max(diff.abs() / dist);
        }
    }
    println!("sampled quotient {worst:.3} <= certified bound {bound:.3}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
