use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::protocol::protocol_mask;
use crate::data::TimeSeriesInstance;
use crate::error::{Error, Result};
use crate::meta::{infer_adapt, Checkpoint};
use crate::model::LatentCode;

/// Adapt a latent code to every series, seen through the protocol mask at
/// `rate` and `seed` (a rate of 1 keeps every observed entry).
pub fn adapted_latents(dataset: &[TimeSeriesInstance], checkpoint: &Checkpoint, rate: f64, seed: u64) -> Result<Vec<LatentCode>> {
    use rayon::prelude::*;
    dataset
        .par_iter()
        .map(|inst| {
            let masked = protocol_mask(inst, rate, seed)?;
            let (phi, _) = infer_adapt(&masked, &checkpoint.params, &checkpoint.config, true)
                .map_err(|e| e.context(format!("series `{}`", inst.id)))?;
            Ok(phi)
        })
        .collect()
}

/// CSV with header `series_id,city,phi0,…`, one row per series.
pub fn write_latents(mut w: impl Write, dataset: &[TimeSeriesInstance], latents: &[LatentCode]) -> Result<()> {
    if dataset.len() != latents.len() {
        return Err(Error::dim("one latent code per series is required"));
    }
    let dim = latents.first().map_or(0, LatentCode::dim);
    let mut header = String::from("series_id,city");
    for k in 0..dim {
        header.push_str(&format!(",phi{k}"));
    }
    writeln!(w, "{header}")?;
    for (inst, phi) in dataset.iter().zip(latents) {
        let mut line = format!("{},{}", inst.id, inst.city);
        for v in &phi.values {
            line.push_str(&format!(",{v}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn export_latents(
    dataset: &[TimeSeriesInstance],
    checkpoint: &Checkpoint,
    rate: f64,
    seed: u64,
    path: impl AsRef<Path>,
) -> Result<Vec<LatentCode>> {
    let latents = adapted_latents(dataset, checkpoint, rate, seed)?;
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::Io(e).context(path.display()))?;
    let mut w = BufWriter::new(file);
    write_latents(&mut w, dataset, &latents)?;
    w.flush()?;
    Ok(latents)
}
