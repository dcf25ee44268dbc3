use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{masked_stats, unit_interval, NormStats, TimeSeriesInstance, DEFAULT_EPSILON};
use crate::embedding::{pseudo_inverse_operator, DelayConfig, EmbeddedGrid};
use crate::error::{Error, Result};
use crate::model::{CrfConfig, GridInput};
use crate::tensor::{SparseMatrix, Tensor};

/// How series are arranged into the grids the model reconstructs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// One delay-embedded grid per series.
    #[default]
    Series,
    /// One sensors × time matrix per city, with no delay embedding.
    Sensor2d,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskOptions {
    /// `None` picks [`DelayConfig::auto`] per series.
    pub delay: Option<DelayConfig>,
    pub normalize: bool,
}

impl Default for TaskOptions {
    fn default() -> Self {
        Self {
            delay: None,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reconstruction {
    /// Average overlapping delay cells back to a series.
    Delay(DelayConfig),
    /// Each grid row is one series.
    Rows,
}

/// One unit of meta-learning: a grid of coordinates with normalized labels
/// at observed cells, plus what is needed to map predictions back.
#[derive(Debug, Clone)]
pub struct Task {
    /// Series id, or city for a sensor matrix.
    pub key: String,
    /// Series ids in output order.
    pub members: Vec<String>,
    pub input: GridInput,
    /// Normalized observed values; zero at unobserved cells.
    pub labels: Tensor,
    /// `1 / observed_cells` at observed cells, zero elsewhere.
    pub cell_weights: Tensor,
    pub observed_cells: usize,
    pub norms: Vec<NormStats>,
    pub reconstruction: Reconstruction,
    pub series_len: usize,
    /// First differences along time of the reconstructed (normalized)
    /// series, as a linear map of the flattened grid.
    pub variation: Arc<SparseMatrix>,
    /// Original values and masks, for overwriting observed positions.
    pub values: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
}

fn stats_for(values: &[f64], mask: &[bool], normalize: bool) -> Result<NormStats> {
    if normalize {
        masked_stats(values, mask, DEFAULT_EPSILON)
    } else {
        Ok(NormStats::identity())
    }
}

/// `(T−1) × T` forward-difference operator.
fn difference_triplets(t: usize, offset: usize, out: &mut Vec<(usize, usize, f64)>, row0: usize) {
    for k in 0..t.saturating_sub(1) {
        out.push((row0 + k, offset + k + 1, 1.0));
        out.push((row0 + k, offset + k, -1.0));
    }
}

fn build_grid_tensors(
    rows: usize,
    cols: usize,
    cell: impl Fn(usize, usize) -> Option<f64>,
) -> Result<(Tensor, Tensor, usize)> {
    let mut labels = vec![0.0; rows * cols];
    let mut observed = vec![false; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            if let Some(v) = cell(i, j) {
                labels[i * cols + j] = v;
                observed[i * cols + j] = true;
            }
        }
    }
    let n = observed.iter().filter(|&&o| o).count();
    if n == 0 {
        return Err(Error::contract("task has no observed cells"));
    }
    let w = 1.0 / n as f64;
    let weights = observed.iter().map(|&o| if o { w } else { 0.0 }).collect();
    Ok((Tensor::matrix(rows, cols, labels)?, Tensor::matrix(rows, cols, weights)?, n))
}

impl Task {
    pub fn from_series(instance: &TimeSeriesInstance, crf: &CrfConfig, options: &TaskOptions) -> Result<Task> {
        instance.require_observed()?;
        let t = instance.len();
        let delay = options.delay.unwrap_or_else(|| DelayConfig::auto(t));
        let ctx = |e: Error| e.context(format!("series `{}`", instance.id));
        let stats = stats_for(&instance.values, &instance.mask, options.normalize).map_err(ctx)?;
        let normalized: Vec<f64> = instance
            .values
            .iter()
            .zip(&instance.mask)
            .map(|(&v, &m)| if m { stats.normalize(v) } else { 0.0 })
            .collect();
        let grid = EmbeddedGrid::build(&instance.timestamps, &normalized, &instance.mask, &delay).map_err(ctx)?;
        let (labels, cell_weights, observed_cells) = build_grid_tensors(grid.rows, grid.cols, |i, j| {
            let k = i * grid.cols + j;
            grid.cell_mask[k].then(|| grid.cell_values[k])
        })?;
        let mut diff = Vec::new();
        difference_triplets(t, 0, &mut diff, 0);
        let diff = SparseMatrix::from_triplets(t.saturating_sub(1).max(1), t, diff)?;
        let variation = Arc::new(diff.compose(&pseudo_inverse_operator(&delay, t)?)?);
        Ok(Task {
            key: instance.id.clone(),
            members: vec![instance.id.clone()],
            input: GridInput::new(crf, &grid.coord_row, &grid.coord_col)?,
            labels,
            cell_weights,
            observed_cells,
            norms: vec![stats],
            reconstruction: Reconstruction::Delay(delay),
            series_len: t,
            variation,
            values: vec![instance.values.clone()],
            masks: vec![instance.mask.clone()],
        })
    }

    /// Sensor-matrix task from the series of one city, which must share
    /// their timestamps. Row coordinates are sensor positions on `[0, 1]`,
    /// column coordinates the rescaled shared timestamps; each row is
    /// normalized with its own statistics.
    pub fn from_city(instances: &[&TimeSeriesInstance], crf: &CrfConfig, options: &TaskOptions) -> Result<Task> {
        let first = instances.first().ok_or_else(|| Error::contract("city task needs at least one series"))?;
        for inst in instances {
            if inst.timestamps != first.timestamps {
                return Err(Error::Data(format!(
                    "series `{}` and `{}` of city `{}` do not share timestamps",
                    first.id, inst.id, first.city
                )));
            }
        }
        let (n, t) = (instances.len(), first.len());
        let mut norms = Vec::with_capacity(n);
        for inst in instances {
            if inst.observed_count() == 0 {
                // a sensor with nothing observed still gets predictions, on the unit scale
                norms.push(NormStats::identity());
            } else {
                let ctx = |e: Error| e.context(format!("series `{}`", inst.id));
                norms.push(stats_for(&inst.values, &inst.mask, options.normalize).map_err(ctx)?);
            }
        }
        let (labels, cell_weights, observed_cells) = build_grid_tensors(n, t, |i, j| {
            instances[i].mask[j].then(|| norms[i].normalize(instances[i].values[j]))
        })?;
        let row_coords: Vec<f64> = if n == 1 {
            vec![0.0]
        } else {
            (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
        };
        let mut diff = Vec::new();
        for i in 0..n {
            difference_triplets(t, i * t, &mut diff, i * (t - 1));
        }
        let variation = Arc::new(SparseMatrix::from_triplets((n * (t - 1)).max(1), n * t, diff)?);
        Ok(Task {
            key: first.city.clone(),
            members: instances.iter().map(|s| s.id.clone()).collect(),
            input: GridInput::new(crf, &row_coords, &unit_interval(&first.timestamps))?,
            labels,
            cell_weights,
            observed_cells,
            norms,
            reconstruction: Reconstruction::Rows,
            series_len: t,
            variation,
            values: instances.iter().map(|s| s.values.clone()).collect(),
            masks: instances.iter().map(|s| s.mask.clone()).collect(),
        })
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        self.input.shape()
    }

    /// Map a grid of normalized predictions back to series in the original
    /// scale, one per member.
    pub fn decode(&self, grid: &Tensor) -> Result<Vec<Vec<f64>>> {
        let (r, c) = self.grid_shape();
        if grid.shape() != [r, c] {
            return Err(Error::dim(format!(
                "prediction grid is {:?}, task grid is {r}x{c}",
                grid.shape()
            )));
        }
        let normalized: Vec<Vec<f64>> = match &self.reconstruction {
            Reconstruction::Delay(delay) => {
                vec![crate::embedding::inverse_embed(grid.data(), delay, self.series_len)?]
            }
            Reconstruction::Rows => grid.data().chunks(c).map(|row| row.to_vec()).collect(),
        };
        Ok(normalized
            .into_iter()
            .zip(&self.norms)
            .map(|(series, stats)| series.into_iter().map(|p| stats.denormalize(p)).collect())
            .collect())
    }

    /// [`Task::decode`], optionally putting observed values back in place.
    pub fn impute_from_grid(&self, grid: &Tensor, overwrite_observed: bool) -> Result<Vec<Vec<f64>>> {
        let mut out = self.decode(grid)?;
        if overwrite_observed {
            for ((series, values), mask) in out.iter_mut().zip(&self.values).zip(&self.masks) {
                for ((p, &v), &m) in series.iter_mut().zip(values).zip(mask) {
                    if m {
                        *p = v;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Build the tasks of a dataset. With [`Layout::Series`] there is one task
/// per instance in input order; with [`Layout::Sensor2d`] one per city in
/// first-appearance order.
pub fn build_tasks(
    instances: &[TimeSeriesInstance],
    layout: Layout,
    crf: &CrfConfig,
    options: &TaskOptions,
) -> Result<Vec<Task>> {
    match layout {
        Layout::Series => instances.iter().map(|s| Task::from_series(s, crf, options)).collect(),
        Layout::Sensor2d => crate::data::group_by_city(instances)
            .into_iter()
            .map(|(_, idx)| {
                let members: Vec<&TimeSeriesInstance> = idx.iter().map(|&i| &instances[i]).collect();
                Task::from_city(&members, crf, options)
            })
            .collect(),
    }
}
