use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::TimeSeriesInstance;
use crate::error::{Error, Result};

const REQUIRED: [&str; 4] = ["series_id", "city", "timestamp", "value"];

struct Row {
    line: u64,
    city: String,
    timestamp: f64,
    value: f64,
    mask: bool,
}

/// Read `series_id,city,timestamp,value[,mask]` rows from a file.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<TimeSeriesInstance>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(e).context(path.display()))?;
    read_csv(file)
}

/// Rows are grouped by `series_id` and sorted by timestamp; instances come
/// back ordered by id, so row order in the file does not matter. An empty
/// value is read as NaN and only allowed on unobserved rows.
pub fn read_csv(reader: impl Read) -> Result<Vec<TimeSeriesInstance>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_mask = match names.as_slice() {
        [a, b, c, d] if [*a, *b, *c, *d] == REQUIRED => false,
        [a, b, c, d, "mask"] if [*a, *b, *c, *d] == REQUIRED => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `series_id,city,timestamp,value[,mask]`, got `{}`", names.join(",")),
            })
        }
    };

    let mut series: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let parse_num = |i: usize, name: &str| -> Result<f64> {
            let s = field(i);
            if s.is_empty() && name == "value" {
                return Ok(f64::NAN);
            }
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("invalid {name} `{s}`"),
            })
        };
        let timestamp = parse_num(2, "timestamp")?;
        if !timestamp.is_finite() {
            return Err(Error::Parse {
                line,
                message: "timestamp must be finite".into(),
            });
        }
        let value = parse_num(3, "value")?;
        let mask = if has_mask {
            match field(4) {
                "1" => true,
                "0" => false,
                s => {
                    return Err(Error::Parse {
                        line,
                        message: format!("mask must be 0 or 1, got `{s}`"),
                    })
                }
            }
        } else {
            true
        };
        if mask && !value.is_finite() {
            return Err(Error::Parse {
                line,
                message: "observed value must be a finite number".into(),
            });
        }
        let id = field(0);
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty series_id".into(),
            });
        }
        series.entry(id.to_string()).or_default().push(Row {
            line,
            city: field(1).to_string(),
            timestamp,
            value,
            mask,
        });
    }

    let mut out = Vec::with_capacity(series.len());
    for (id, mut rows) in series {
        rows.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        if let Some(w) = rows.windows(2).find(|w| w[0].timestamp == w[1].timestamp) {
            return Err(Error::Data(format!(
                "series `{id}` has duplicate timestamp {} (lines {} and {})",
                w[0].timestamp, w[0].line, w[1].line
            )));
        }
        let city = rows[0].city.clone();
        if let Some(r) = rows.iter().find(|r| r.city != city) {
            return Err(Error::Data(format!(
                "series `{id}` changes city from `{city}` to `{}` at line {}",
                r.city, r.line
            )));
        }
        let inst = TimeSeriesInstance::new(
            id,
            city,
            rows.iter().map(|r| r.timestamp).collect(),
            rows.iter().map(|r| r.value).collect(),
            rows.iter().map(|r| r.mask).collect(),
        )?;
        out.push(inst);
    }
    Ok(out)
}

pub fn write_csv(path: impl AsRef<Path>, instances: &[TimeSeriesInstance]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::Io(e).context(path.display()))?;
    write_csv_to(file, instances)
}

/// Writes the five-column form, mask included.
pub fn write_csv_to(mut w: impl Write, instances: &[TimeSeriesInstance]) -> Result<()> {
    let mut buf = String::from("series_id,city,timestamp,value,mask\n");
    for inst in instances {
        for i in 0..inst.len() {
            buf.push_str(&format!(
                "{},{},{},{},{}\n",
                inst.id, inst.city, inst.timestamps[i], inst.values[i], inst.mask[i] as u8
            ));
        }
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
