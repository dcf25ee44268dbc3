use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::protocol::{Method, Protocol};
use crate::error::{Error, Result};

/// Scores of one method on one series at one rate and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub city: String,
    pub series_id: String,
    pub method: Method,
    pub rate: f64,
    pub seed: u64,
    pub mae: f64,
    pub mse: f64,
}

/// Digest of every mask used at one rate and seed. All methods are scored
/// against the masks it summarizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub seed: u64,
    pub rate: f64,
    pub digest: String,
}

/// Wall-clock figures, kept apart from the scores so reports stay
/// byte-reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub method_seconds: Vec<(Method, f64)>,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// City name, or `None` for the overall figure.
    pub city: Option<String>,
    /// Seed, or `None` when averaged over seeds.
    pub seed: Option<u64>,
    pub method: Method,
    pub rate: f64,
    pub mae: f64,
    pub mse: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub protocol: Protocol,
    pub masks: Vec<MaskRecord>,
    /// Unweighted means over every scored series.
    pub overall: Vec<Aggregate>,
    /// Unweighted means over each city's series.
    pub per_city: Vec<Aggregate>,
    pub per_seed: Vec<Aggregate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub protocol: Protocol,
    /// Ordered by seed, rate, series, then method.
    pub rows: Vec<EvalRow>,
    pub masks: Vec<MaskRecord>,
    pub timing: Timing,
}

impl EvalReport {
    pub(crate) fn new(protocol: Protocol) -> Self {
        let method_seconds = protocol.methods.iter().map(|&m| (m, 0.0)).collect();
        Self {
            protocol,
            rows: Vec::new(),
            masks: Vec::new(),
            timing: Timing {
                method_seconds,
                train_seconds: 0.0,
            },
        }
    }

    pub(crate) fn absorb(&mut self, rows: Vec<EvalRow>, mask: MaskRecord, seconds: &[f64], train_seconds: f64) {
        self.rows.extend(rows);
        self.masks.push(mask);
        for ((_, total), s) in self.timing.method_seconds.iter_mut().zip(seconds) {
            *total += s;
        }
        self.timing.train_seconds += train_seconds;
    }

    fn aggregate(&self, key: impl Fn(&EvalRow) -> (Option<String>, Option<u64>)) -> Vec<Aggregate> {
        let mut out: Vec<Aggregate> = Vec::new();
        for row in &self.rows {
            let (city, seed) = key(row);
            let slot = out
                .iter_mut()
                .find(|a| a.city == city && a.seed == seed && a.method == row.method && a.rate == row.rate);
            match slot {
                Some(a) => {
                    a.mae += row.mae;
                    a.mse += row.mse;
                    a.count += 1;
                }
                None => out.push(Aggregate {
                    city,
                    seed,
                    method: row.method,
                    rate: row.rate,
                    mae: row.mae,
                    mse: row.mse,
                    count: 1,
                }),
            }
        }
        for a in &mut out {
            a.mae /= a.count as f64;
            a.mse /= a.count as f64;
        }
        out
    }

    pub fn summary(&self) -> Summary {
        Summary {
            protocol: self.protocol.clone(),
            masks: self.masks.clone(),
            overall: self.aggregate(|_| (None, None)),
            per_city: self.aggregate(|r| (Some(r.city.clone()), None)),
            per_seed: self.aggregate(|r| (None, Some(r.seed))),
        }
    }

    /// Mean MAE of `method` at `rate`, optionally restricted to one seed.
    pub fn mean_mae(&self, method: Method, rate: f64, seed: Option<u64>) -> Option<f64> {
        let picked: Vec<f64> = (self.rows.iter())
            .filter(|r| r.method == method && r.rate == rate && seed.is_none_or(|s| r.seed == s))
            .map(|r| r.mae)
            .collect();
        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
    }

    /// `city,series_id,method,rate,mae,mse`, one row per scored series and
    /// method; seeds follow one another in protocol order.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut buf = String::from("city,series_id,method,rate,mae,mse\n");
        for r in &self.rows {
            buf.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.city,
                r.series_id,
                r.method.name(),
                r.rate,
                r.mae,
                r.mse
            ));
        }
        w.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn write_summary(&self, mut w: impl Write) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.summary()).map_err(|e| Error::Data(e.to_string()))?;
        w.write_all(json.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    /// Writes `report.csv`, `summary.json` and `timing.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::Io(e).context(dir.display()))?;
        let mut csv = Vec::new();
        self.write_csv(&mut csv)?;
        fs::write(dir.join("report.csv"), csv)?;
        let mut summary = Vec::new();
        self.write_summary(&mut summary)?;
        fs::write(dir.join("summary.json"), summary)?;
        let timing = serde_json::to_string_pretty(&self.timing).map_err(|e| Error::Data(e.to_string()))?;
        fs::write(dir.join("timing.json"), timing + "\n")?;
        Ok(())
    }
}
