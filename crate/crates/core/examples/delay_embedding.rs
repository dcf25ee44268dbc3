// Fold a series into a delay grid and average it back.

use metatsi::embedding::{delay_embed, duplication_matrix, inverse_embed, DelayConfig};

pub fn run() -> metatsi::Result<()> {
    let series: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin() * 10.0).collect();
    let cfg = DelayConfig::new(4, 2)?;
    let grid = delay_embed(&series, &cfg)?;
    println!("series of length {} -> grid {:?}", series.len(), grid.shape());
    for row in grid.data().chunks(cfg.m) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:7.3}")).collect();
        println!("  [{}]", cells.join(" "));
    }

    let back = inverse_embed(grid.data(), &cfg, series.len())?;
    let err = series.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("round-trip error {err:.1e}");

    let d = duplication_matrix(&cfg, series.len())?;
    println!("duplication matrix: {} x {} with {} non-zeros", d.rows(), series.len(), d.nnz());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
