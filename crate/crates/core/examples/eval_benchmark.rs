// Train per seed and observation rate on a cross-city split and compare the
// model against the mean and linear baselines.

use std::path::Path;

use metatsi::cli::CliConfig;
use metatsi::data::synth_generate;
use metatsi::eval::{benchmark, Method};

pub fn run() -> metatsi::Result<()> {
    let config = CliConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/small.json"))?;
    let family = synth_generate(&config.synth)?;
    let report = benchmark(&family, &config.protocol, &config.train)?;

    println!("{:<6} {:>9} {:>9} {:>9}", "rate", "mean", "linear", "metatsi");
    for &rate in &config.protocol.rates {
        let cell = |m: Method| report.mean_mae(m, rate, None).map_or("-".into(), |v| format!("{v:.4}"));
        println!("{rate:<6} {:>9} {:>9} {:>9}", cell(Method::Mean), cell(Method::Linear), cell(Method::Metatsi));
    }
    println!("{} scored rows, training took {:.1}s", report.rows.len(), report.timing.train_seconds);

    let dir = tempfile::tempdir()?;
    report.save(dir.path())?;
    let csv = std::fs::read_to_string(dir.path().join("report.csv"))?;
    println!("report.csv begins:\n{}", csv.lines().take(4).collect::<Vec<_>>().join("\n"));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
