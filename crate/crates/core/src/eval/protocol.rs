use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{baseline_linear_interp, baseline_mean};
use super::report::{EvalReport, EvalRow, MaskRecord};
use crate::data::{apply_masking, group_by_city, hidden_positions, znorm_metrics, MaskSpec, TimeSeriesInstance};
use crate::error::{Error, Result};
use crate::meta::{infer_adapt, train, Checkpoint, TrainConfig};
use crate::seeding;

/// An imputation method scored by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Mean of the observed values.
    Mean,
    /// Piecewise-linear interpolation in time.
    Linear,
    /// Meta-learned model adapted to each series by inner steps.
    Metatsi,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mean => "mean",
            Method::Linear => "linear",
            Method::Metatsi => "metatsi",
        }
    }

    pub fn needs_model(self) -> bool {
        matches!(self, Method::Metatsi)
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "mean" => Ok(Method::Mean),
            "linear" => Ok(Method::Linear),
            "metatsi" => Ok(Method::Metatsi),
            other => Err(Error::Config(format!(
                "unknown method `{other}` (expected mean, linear or metatsi)"
            ))),
        }
    }
}

/// Which series a model is trained on and which it is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// One model per city, scored on that city's hidden entries.
    SingleCity,
    /// One model for all cities, scored on every series' hidden entries.
    #[default]
    CrossCity,
    /// A seeded share of each city's series is held out of training.
    UnseenSeries,
    /// A seeded city is held out of training entirely.
    UnseenCity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    /// Fractions of each series left visible.
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub split: SplitMode,
    pub methods: Vec<Method>,
    /// Share of each city's series held out in `unseen-series` mode.
    pub holdout_fraction: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            rates: vec![0.2, 0.1, 0.05, 0.01],
            seeds: vec![0],
            split: SplitMode::CrossCity,
            methods: vec![Method::Mean, Method::Linear, Method::Metatsi],
            holdout_fraction: 0.25,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: &str| Err(Error::Config(format!("protocol.{field}: {msg}")));
        if self.rates.is_empty() || self.rates.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return err("rates", "need at least one rate, each in (0, 1]");
        }
        if self.seeds.is_empty() {
            return err("seeds", "need at least one seed");
        }
        if !self.methods.iter().any(|m| !m.needs_model()) {
            return err("methods", "include at least one baseline");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return err("holdout_fraction", "must be in (0, 1)");
        }
        Ok(())
    }

    pub fn needs_model(&self) -> bool {
        self.methods.iter().any(|m| m.needs_model())
    }
}

/// Indices into the dataset for one training run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partition `dataset` according to the split mode. Held-out choices are
/// seeded; index lists are sorted.
pub fn plan_splits(dataset: &[TimeSeriesInstance], mode: SplitMode, holdout_fraction: f64, seed: u64) -> Result<Vec<Split>> {
    if dataset.is_empty() {
        return Err(Error::Data("dataset is empty".into()));
    }
    let cities = group_by_city(dataset);
    let all: Vec<usize> = (0..dataset.len()).collect();
    Ok(match mode {
        SplitMode::CrossCity => vec![Split {
            train: all.clone(),
            test: all,
        }],
        SplitMode::SingleCity => cities
            .into_iter()
            .map(|(_, idx)| Split {
                train: idx.clone(),
                test: idx,
            })
            .collect(),
        SplitMode::UnseenSeries => {
            let mut test = Vec::new();
            for (c, (_, idx)) in cities.iter().enumerate() {
                if idx.len() < 2 {
                    continue;
                }
                let n = ((holdout_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
                let mut shuffled = idx.clone();
                shuffled.shuffle(&mut seeding::rng(seed, "holdout-series", &[c as u64]));
                test.extend_from_slice(&shuffled[..n]);
            }
            if test.is_empty() {
                return Err(Error::Data("unseen-series split needs a city with at least two series".into()));
            }
            test.sort_unstable();
            let train = all.into_iter().filter(|i| test.binary_search(i).is_err()).collect();
            vec![Split { train, test }]
        }
        SplitMode::UnseenCity => {
            if cities.len() < 2 {
                return Err(Error::Data("unseen-city split needs at least two cities".into()));
            }
            let mut order: Vec<usize> = (0..cities.len()).collect();
            order.shuffle(&mut seeding::rng(seed, "holdout-city", &[]));
            let test = cities[order[0]].1.clone();
            let train = all.into_iter().filter(|i| test.binary_search(i).is_err()).collect();
            vec![Split { train, test }]
        }
    })
}

/// The mask every method sees for one series at one rate and seed.
pub fn protocol_mask(instance: &TimeSeriesInstance, rate: f64, seed: u64) -> Result<TimeSeriesInstance> {
    apply_masking(instance, &MaskSpec::for_series(rate, seed, &instance.id))
}

fn predict(method: Method, masked: &TimeSeriesInstance, model: Option<&Checkpoint>) -> Result<Vec<f64>> {
    match method {
        Method::Mean => baseline_mean(masked),
        Method::Linear => baseline_linear_interp(masked),
        Method::Metatsi => {
            let ckpt = model.ok_or_else(|| Error::Config("method `metatsi` needs a checkpoint".into()))?;
            Ok(infer_adapt(masked, &ckpt.params, &ckpt.config, true)?.1)
        }
    }
}

struct Scored {
    rows: Vec<EvalRow>,
    masks: Vec<Vec<bool>>,
    seconds: Vec<f64>,
}

/// Score `methods` on `instances` at one rate and seed. Every method receives
/// the same masked copy of each series.
fn score(
    dataset: &[TimeSeriesInstance],
    indices: &[usize],
    methods: &[Method],
    rate: f64,
    seed: u64,
    model: Option<&Checkpoint>,
) -> Result<Scored> {
    let per_instance: Vec<Result<Scored>> = indices
        .par_iter()
        .map(|&i| {
            let truth = &dataset[i];
            let masked = protocol_mask(truth, rate, seed)?;
            let hidden = hidden_positions(truth, &masked);
            if !hidden.iter().any(|&h| h) {
                return Err(Error::contract(format!(
                    "series `{}` has nothing hidden at rate {rate}",
                    truth.id
                )));
            }
            let reference: Vec<f64> = (truth.values.iter().zip(&truth.mask))
                .map(|(&v, &m)| if m { v } else { f64::NAN })
                .collect();
            let mut rows = Vec::with_capacity(methods.len());
            let mut seconds = vec![0.0; methods.len()];
            for (k, &method) in methods.iter().enumerate() {
                let started = Instant::now();
                let pred = predict(method, &masked, model).map_err(|e| e.context(format!("{} on `{}`", method.name(), truth.id)))?;
                seconds[k] = started.elapsed().as_secs_f64();
                let m = znorm_metrics(&pred, &reference, &hidden)?;
                rows.push(EvalRow {
                    city: truth.city.clone(),
                    series_id: truth.id.clone(),
                    method,
                    rate,
                    seed,
                    mae: m.mae,
                    mse: m.mse,
                });
            }
            Ok(Scored {
                rows,
                masks: vec![masked.mask],
                seconds,
            })
        })
        .collect();
    let mut out = Scored {
        rows: Vec::new(),
        masks: Vec::new(),
        seconds: vec![0.0; methods.len()],
    };
    for r in per_instance {
        let r = r?;
        out.rows.extend(r.rows);
        out.masks.extend(r.masks);
        out.seconds.iter_mut().zip(&r.seconds).for_each(|(a, b)| *a += b);
    }
    Ok(out)
}

fn mask_record(seed: u64, rate: f64, masks: &[Vec<bool>]) -> MaskRecord {
    MaskRecord {
        seed,
        rate,
        digest: seeding::mask_digest(&masks.concat()),
    }
}

/// Score `dataset` with a fixed checkpoint (or baselines only). Every
/// instance is masked per rate and seed; model methods adapt only their
/// latent code to the visible entries.
pub fn run_protocol(dataset: &[TimeSeriesInstance], protocol: &Protocol, checkpoint: Option<&Checkpoint>) -> Result<EvalReport> {
    protocol.validate()?;
    if protocol.needs_model() && checkpoint.is_none() {
        return Err(Error::Config("protocol includes a model method but no checkpoint was given".into()));
    }
    if dataset.is_empty() {
        return Err(Error::Data("dataset is empty".into()));
    }
    let all: Vec<usize> = (0..dataset.len()).collect();
    let mut report = EvalReport::new(protocol.clone());
    for &seed in &protocol.seeds {
        for &rate in &protocol.rates {
            let scored = score(dataset, &all, &protocol.methods, rate, seed, checkpoint)?;
            report.absorb(scored.rows, mask_record(seed, rate, &scored.masks), &scored.seconds, 0.0);
        }
    }
    Ok(report)
}

/// Train and score according to the protocol's split mode: for each seed,
/// rate and split, a model is meta-trained on the training series masked at
/// that rate (`config.seed` set to the protocol seed) and scored on the test
/// series under the same masks.
pub fn benchmark(dataset: &[TimeSeriesInstance], protocol: &Protocol, config: &TrainConfig) -> Result<EvalReport> {
    protocol.validate()?;
    config.validate()?;
    let mut report = EvalReport::new(protocol.clone());
    for &seed in &protocol.seeds {
        let splits = plan_splits(dataset, protocol.split, protocol.holdout_fraction, seed)?;
        for &rate in &protocol.rates {
            let mut rows = Vec::new();
            let mut masks = Vec::new();
            let mut seconds = vec![0.0; protocol.methods.len()];
            let mut train_seconds = 0.0;
            let mut order: Vec<(usize, usize)> = Vec::new();
            for split in &splits {
                let model = if protocol.needs_model() {
                    let started = Instant::now();
                    let train_set = split
                        .train
                        .iter()
                        .map(|&i| protocol_mask(&dataset[i], rate, seed))
                        .collect::<Result<Vec<_>>>()?;
                    let run = TrainConfig {
                        seed,
                        ..config.clone()
                    };
                    let outcome = train(&train_set, &run).map_err(|e| e.context(format!("training at seed {seed}, rate {rate}")))?;
                    train_seconds += started.elapsed().as_secs_f64();
                    Some(outcome.last)
                } else {
                    None
                };
                let scored = score(dataset, &split.test, &protocol.methods, rate, seed, model.as_ref())?;
                for (k, &i) in split.test.iter().enumerate() {
                    order.push((i, rows.len() / protocol.methods.len().max(1) + k));
                }
                rows.extend(scored.rows);
                masks.extend(scored.masks);
                seconds.iter_mut().zip(&scored.seconds).for_each(|(a, b)| *a += b);
            }
            // rows grouped per instance, reordered by dataset index
            order.sort_unstable();
            let width = protocol.methods.len();
            let sorted_rows = order
                .iter()
                .flat_map(|&(_, block)| rows[block * width..(block + 1) * width].iter().cloned())
                .collect();
            let sorted_masks: Vec<Vec<bool>> = order.iter().map(|&(_, block)| masks[block].clone()).collect();
            report.absorb(sorted_rows, mask_record(seed, rate, &sorted_masks), &seconds, train_seconds);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_series(id: &str, city: &str, n: usize) -> TimeSeriesInstance {
        let t: Vec<f64> = (0..n).map(|i| i as f64 + 0.3 * ((i * 7 % 5) as f64 / 5.0)).collect();
        let v = t.iter().map(|x| 2.0 + 0.5 * x).collect();
        TimeSeriesInstance::observed(id, city, t, v).unwrap()
    }

    fn baselines(rates: Vec<f64>) -> Protocol {
        Protocol {
            rates,
            seeds: vec![3],
            methods: vec![Method::Mean, Method::Linear],
            ..Default::default()
        }
    }

    #[test]
    fn exact_method_scores_zero() {
        let t: Vec<f64> = (0..30).map(f64::from).collect();
        let data = vec![TimeSeriesInstance::observed("a", "x", t, vec![7.25; 30]).unwrap()];
        let report = run_protocol(&data, &baselines(vec![0.3]), None).unwrap();
        assert_eq!(report.rows.len(), 2);
        for r in &report.rows {
            assert!(r.mae < 1e-12 && r.mse < 1e-24, "{r:?}");
        }
    }

    #[test]
    fn one_row_per_series_method_and_rate() {
        let data: Vec<_> = (0..5).map(|i| linear_series(&format!("s{i}"), "x", 50)).collect();
        let protocol = Protocol {
            seeds: vec![0, 1],
            ..baselines(vec![0.2, 0.1, 0.05])
        };
        let report = run_protocol(&data, &protocol, None).unwrap();
        assert_eq!(report.rows.len(), 5 * 2 * 3 * 2);
        assert_eq!(report.masks.len(), 6);
        let summary = report.summary();
        assert_eq!(summary.overall.len(), 2 * 3);
        assert_eq!(summary.per_seed.len(), 2 * 2 * 3);
    }

    #[test]
    fn mean_baseline_matches_hand_computation() {
        let t: Vec<f64> = (0..10).map(f64::from).collect();
        let v = vec![1.0, 3.0, 2.0, 5.0, 4.0, 0.0, 6.0, 2.0, 3.0, 4.0];
        let truth = TimeSeriesInstance::observed("toy", "c", t, v.clone()).unwrap();
        let data = vec![truth.clone()];
        let report = run_protocol(&data, &baselines(vec![0.4]), None).unwrap();
        let masked = protocol_mask(&truth, 0.4, 3).unwrap();
        let seen: Vec<f64> = (0..10).filter(|&i| masked.mask[i]).map(|i| v[i]).collect();
        assert_eq!(seen.len(), 4);
        let guess = seen.iter().sum::<f64>() / 4.0;
        // truth mean 3, population sd sqrt(3)
        let sd = 3f64.sqrt();
        let hidden: Vec<usize> = (0..10).filter(|&i| !masked.mask[i]).collect();
        let mae = hidden.iter().map(|&i| ((guess - v[i]) / sd).abs()).sum::<f64>() / 6.0;
        let row = report.rows.iter().find(|r| r.method == Method::Mean).unwrap();
        assert!((row.mae - mae).abs() < 1e-12, "{} vs {mae}", row.mae);
    }

    #[test]
    fn masks_do_not_depend_on_the_method_set() {
        let data: Vec<_> = (0..4).map(|i| linear_series(&format!("s{i}"), "x", 30)).collect();
        let both = run_protocol(&data, &baselines(vec![0.2]), None).unwrap();
        let one = run_protocol(
            &data,
            &Protocol {
                methods: vec![Method::Linear],
                ..baselines(vec![0.2])
            },
            None,
        )
        .unwrap();
        assert_eq!(both.masks, one.masks);
    }

    #[test]
    fn model_methods_need_a_checkpoint() {
        let data = vec![linear_series("a", "x", 20)];
        let protocol = Protocol {
            methods: vec![Method::Mean, Method::Metatsi],
            ..baselines(vec![0.5])
        };
        assert!(matches!(run_protocol(&data, &protocol, None), Err(Error::Config(_))));
        let only_model = Protocol {
            methods: vec![Method::Metatsi],
            ..baselines(vec![0.5])
        };
        assert!(matches!(only_model.validate(), Err(Error::Config(m)) if m.contains("baseline")));
    }

    #[test]
    fn splits_partition_the_dataset() {
        let mut data = Vec::new();
        for c in 0..3 {
            for s in 0..4 {
                data.push(linear_series(&format!("c{c}s{s}"), &format!("c{c}"), 12));
            }
        }
        let single = plan_splits(&data, SplitMode::SingleCity, 0.25, 0).unwrap();
        assert_eq!(single.len(), 3);
        assert!(single.iter().all(|s| s.train == s.test && s.test.len() == 4));
        for mode in [SplitMode::UnseenSeries, SplitMode::UnseenCity] {
            let split = &plan_splits(&data, mode, 0.25, 7).unwrap()[0];
            let mut all: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..12).collect::<Vec<_>>());
            assert!(split.test.iter().all(|i| !split.train.contains(i)));
        }
        let unseen = &plan_splits(&data, SplitMode::UnseenSeries, 0.25, 7).unwrap()[0];
        assert_eq!(unseen.test.len(), 3);
        let city = &plan_splits(&data, SplitMode::UnseenCity, 0.25, 7).unwrap()[0];
        let held: Vec<&str> = city.test.iter().map(|&i| data[i].city.as_str()).collect();
        assert!(held.iter().all(|c| *c == held[0]) && held.len() == 4);
    }

    #[test]
    fn report_files_are_reproducible() {
        let data: Vec<_> = (0..3).map(|i| linear_series(&format!("s{i}"), "x", 30)).collect();
        let dir = tempfile::tempdir().unwrap();
        let a = run_protocol(&data, &baselines(vec![0.2, 0.1]), None).unwrap();
        let b = run_protocol(&data, &baselines(vec![0.2, 0.1]), None).unwrap();
        a.save(dir.path().join("a")).unwrap();
        b.save(dir.path().join("b")).unwrap();
        for f in ["report.csv", "summary.json"] {
            assert_eq!(
                std::fs::read(dir.path().join("a").join(f)).unwrap(),
                std::fs::read(dir.path().join("b").join(f)).unwrap()
            );
        }
        let csv = std::fs::read_to_string(dir.path().join("a/report.csv")).unwrap();
        assert!(csv.starts_with("city,series_id,method,rate,mae,mse\n"));
        assert_eq!(csv.lines().count(), 1 + 3 * 2 * 2);
    }
}
