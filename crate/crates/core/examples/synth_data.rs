// Generate a synthetic city/series family, write it as CSV and read it back.

use metatsi::data::{group_by_city, load_csv, synth_generate, write_csv, Range, SynthFamilyConfig};

pub fn run() -> metatsi::Result<()> {
    let config = SynthFamilyConfig {
        n_cities: 3,
        series_per_city: 4,
        length_range: Range::new(80, 120),
        seed: 7,
        ..Default::default()
    };
    let family = synth_generate(&config)?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("synthetic.csv");
    write_csv(&path, &family)?;
    let loaded = load_csv(&path)?;
    assert_eq!(loaded, family);

    for (city, members) in group_by_city(&loaded) {
        let lengths: Vec<usize> = members.iter().map(|&i| loaded[i].len()).collect();
        println!("{city}: {} series, lengths {lengths:?}", members.len());
    }
    let first = &loaded[0];
    println!(
        "{} spans t={:.1}..{:.1}, values {:.2}..{:.2}",
        first.id,
        first.timestamps[0],
        first.timestamps[first.len() - 1],
        first.values.iter().cloned().fold(f64::INFINITY, f64::min),
        first.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
