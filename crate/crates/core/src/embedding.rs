//! Coordinate delay embedding and its inverse.
//!
//! A length-`T` series is lifted into an `R × m` Hankel-structured grid with
//! `R = T − (m−1)δ`; cell `(i, j)` holds time index `i + jδ`. The inverse maps
//! a grid back to the time axis by averaging every cell that shares a time
//! index, which is exactly the least-squares pseudo-inverse of the 0/1
//! duplication matrix `D` (`vec(grid) = D x`).

use serde::{Deserialize, Serialize};

use crate::data::unit_interval;
use crate::error::{Error, Result};
use crate::tensor::{SparseMatrix, Tensor};

/// Embedding dimension `m` (grid columns) and lag `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayConfig {
    pub m: usize,
    pub delta: usize,
}

impl DelayConfig {
    pub fn new(m: usize, delta: usize) -> Result<Self> {
        if m == 0 || delta == 0 {
            return Err(Error::Config(format!("delay m and delta must be >= 1, got m={m}, delta={delta}")));
        }
        Ok(Self { m, delta })
    }

    /// Identity embedding (a single column).
    pub fn identity() -> Self {
        Self { m: 1, delta: 1 }
    }

    /// Default for a series of length `t`: the smallest of the standard
    /// dimensions 24/36/72, shrunk to `t/4` for short series, lag 1.
    pub fn auto(t: usize) -> Self {
        let m = if t >= 96 { 24 } else { (t / 4).max(1) };
        Self { m, delta: 1 }
    }

    /// Grid rows for a series of length `t`.
    pub fn rows(&self, t: usize) -> Result<usize> {
        let span = (self.m - 1) * self.delta;
        if t <= span {
            return Err(Error::contract(format!(
                "series length {t} too short for m={} delta={} (needs > {span})",
                self.m, self.delta
            )));
        }
        let rows = t - span;
        if self.m > 1 && rows < self.delta {
            return Err(Error::contract(format!(
                "series length {t} leaves time indices uncovered for m={} delta={}",
                self.m, self.delta
            )));
        }
        Ok(rows)
    }

    pub fn time_index(&self, i: usize, j: usize) -> usize {
        i + j * self.delta
    }
}

/// Grid of `x` under the index map `(i, j) ↦ i + jδ`, as an `R × m` matrix.
pub fn delay_embed(x: &[f64], config: &DelayConfig) -> Result<Tensor> {
    let r = config.rows(x.len())?;
    let m = config.m;
    let mut data = Vec::with_capacity(r * m);
    for i in 0..r {
        for j in 0..m {
            data.push(x[config.time_index(i, j)]);
        }
    }
    Tensor::matrix(r, m, data)
}

/// Average the cells that share a time index. `grid` is row-major `R × m`.
pub fn inverse_embed(grid: &[f64], config: &DelayConfig, t: usize) -> Result<Vec<f64>> {
    let r = config.rows(t)?;
    if grid.len() != r * config.m {
        return Err(Error::contract(format!(
            "grid has {} cells, expected {r}x{} for T={t}",
            grid.len(),
            config.m
        )));
    }
    let counts = overlap_counts(config, t)?;
    let mut out = vec![0.0; t];
    for i in 0..r {
        for j in 0..config.m {
            out[config.time_index(i, j)] += grid[i * config.m + j];
        }
    }
    for (v, c) in out.iter_mut().zip(&counts) {
        *v /= *c as f64;
    }
    Ok(out)
}

/// Number of grid cells covering each time index.
pub fn overlap_counts(config: &DelayConfig, t: usize) -> Result<Vec<usize>> {
    let r = config.rows(t)?;
    let mut counts = vec![0usize; t];
    for i in 0..r {
        for j in 0..config.m {
            counts[config.time_index(i, j)] += 1;
        }
    }
    Ok(counts)
}

/// The `(R·m) × T` 0/1 duplication matrix, `vec(grid) = D x`.
pub fn duplication_matrix(config: &DelayConfig, t: usize) -> Result<SparseMatrix> {
    let r = config.rows(t)?;
    let triplets = (0..r)
        .flat_map(|i| (0..config.m).map(move |j| (i, j)))
        .map(|(i, j)| (i * config.m + j, config.time_index(i, j), 1.0))
        .collect();
    SparseMatrix::from_triplets(r * config.m, t, triplets)
}

/// `D†` as a sparse `T × (R·m)` operator (overlap averaging).
pub fn pseudo_inverse_operator(config: &DelayConfig, t: usize) -> Result<SparseMatrix> {
    let r = config.rows(t)?;
    let counts = overlap_counts(config, t)?;
    let triplets = (0..r)
        .flat_map(|i| (0..config.m).map(move |j| (i, j)))
        .map(|(i, j)| {
            let ti = config.time_index(i, j);
            (ti, i * config.m + j, 1.0 / counts[ti] as f64)
        })
        .collect();
    SparseMatrix::from_triplets(t, r * config.m, triplets)
}

/// Delay-embedded coordinates, labels and mask of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedGrid {
    pub rows: usize,
    pub cols: usize,
    pub config: DelayConfig,
    /// `rows × cols`, entry `(i, j)` is `i + jδ`.
    pub time_index: Vec<usize>,
    /// Per-row coordinate: the row's first timestamp, rescaled onto `[0, 1]`.
    pub coord_row: Vec<f64>,
    /// Per-column coordinate `j / (m − 1)` (0 when `m = 1`).
    pub coord_col: Vec<f64>,
    pub cell_values: Vec<f64>,
    pub cell_mask: Vec<bool>,
}

impl EmbeddedGrid {
    pub fn build(timestamps: &[f64], values: &[f64], mask: &[bool], config: &DelayConfig) -> Result<Self> {
        let t = timestamps.len();
        if values.len() != t || mask.len() != t {
            return Err(Error::dim("timestamps, values and mask must have equal length"));
        }
        let rows = config.rows(t)?;
        let cols = config.m;
        let mut time_index = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                time_index.push(config.time_index(i, j));
            }
        }
        let coord_row = unit_interval(&timestamps[..rows]);
        let coord_col = if cols == 1 {
            vec![0.0]
        } else {
            (0..cols).map(|j| j as f64 / (cols - 1) as f64).collect()
        };
        let cell_values = time_index.iter().map(|&k| values[k]).collect();
        let cell_mask = time_index.iter().map(|&k| mask[k]).collect();
        Ok(Self {
            rows,
            cols,
            config: *config,
            time_index,
            coord_row,
            coord_col,
            cell_values,
            cell_mask,
        })
    }

    pub fn series_len(&self) -> usize {
        self.rows + (self.cols - 1) * self.config.delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn displayed_matrix_pattern() {
        let g = delay_embed(&[10., 20., 30., 40., 50.], &DelayConfig::new(3, 1).unwrap()).unwrap();
        assert_eq!(g.shape(), &[3, 3]);
        assert_eq!(g.data(), &[10., 20., 30., 20., 30., 40., 30., 40., 50.]);
    }

    #[test]
    fn single_column_is_identity() {
        let x = [3., 1., 4., 1., 5.];
        let g = delay_embed(&x, &DelayConfig::identity()).unwrap();
        assert_eq!(g.shape(), &[5, 1]);
        assert_eq!(g.data(), &x);
    }

    #[test]
    fn strided_lag() {
        let g = delay_embed(&[1., 2., 3., 4., 5.], &DelayConfig::new(2, 2).unwrap()).unwrap();
        assert_eq!(g.shape(), &[3, 2]);
        assert_eq!(g.data(), &[1., 3., 2., 4., 3., 5.]);
    }

    #[test]
    fn too_short_is_a_contract_error() {
        let r = delay_embed(&[1., 2.], &DelayConfig::new(3, 1).unwrap());
        assert!(matches!(r, Err(Error::Contract(_))));
        assert!(DelayConfig::new(0, 1).is_err());
        // one row with lag 2 would skip index 1
        assert!(DelayConfig::new(2, 2).unwrap().rows(3).is_err());
    }

    #[test]
    fn hand_computed_average() {
        let out = inverse_embed(&[1., 2., 3., 4.], &DelayConfig::new(2, 1).unwrap(), 3).unwrap();
        assert_eq!(out, vec![1.0, 2.5, 4.0]);
        assert!(inverse_embed(&[1., 2., 3.], &DelayConfig::new(2, 1).unwrap(), 3).is_err());
    }

    #[test]
    fn constant_grid_maps_to_constant_series() {
        let cfg = DelayConfig::new(4, 2).unwrap();
        let r = cfg.rows(20).unwrap();
        let out = inverse_embed(&vec![2.5; r * 4], &cfg, 20).unwrap();
        assert!(out.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn counts_match_hand_tally() {
        assert_eq!(overlap_counts(&DelayConfig::new(3, 1).unwrap(), 5).unwrap(), vec![1, 2, 3, 2, 1]);
        assert!(overlap_counts(&DelayConfig::identity(), 7).unwrap().iter().all(|&c| c == 1));
    }

    #[test]
    fn sparse_pseudo_inverse_matches_function() {
        let cfg = DelayConfig::new(3, 2).unwrap();
        let t = 11;
        let x: Vec<f64> = (0..t).map(|i| (i as f64).sin()).collect();
        let d = duplication_matrix(&cfg, t).unwrap();
        let grid = d.apply(&x);
        assert_eq!(grid, delay_embed(&x, &cfg).unwrap().into_data());
        let p = pseudo_inverse_operator(&cfg, t).unwrap();
        let noisy: Vec<f64> = grid.iter().enumerate().map(|(k, v)| v + 0.1 * k as f64).collect();
        assert_eq!(p.apply(&noisy), inverse_embed(&noisy, &cfg, t).unwrap());
    }

    #[test]
    fn grid_coordinates_and_mask() {
        let ts = [0.0, 1.0, 3.0, 4.0, 8.0];
        let mask = [true, false, true, true, false];
        let g = EmbeddedGrid::build(&ts, &[1., 2., 3., 4., 5.], &mask, &DelayConfig::new(2, 1).unwrap()).unwrap();
        assert_eq!((g.rows, g.cols), (4, 2));
        assert_eq!(g.coord_row, vec![0.0, 0.25, 0.75, 1.0]);
        assert_eq!(g.coord_col, vec![0.0, 1.0]);
        for (k, &ti) in g.time_index.iter().enumerate() {
            assert_eq!(g.cell_mask[k], mask[ti]);
        }
        assert_eq!(g.series_len(), 5);
    }

    /// Solve `A y = b` by Gaussian elimination with partial pivoting.
    fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut y = vec![0.0; n];
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|k| a[row][k] * y[k]).sum();
            y[row] = (b[row] - s) / a[row][row];
        }
        y
    }

    #[test]
    fn averaging_equals_least_squares_against_materialized_duplication() {
        for (m, delta, t) in [(3, 1, 7), (4, 2, 15), (5, 3, 40), (2, 1, 50)] {
            let cfg = DelayConfig::new(m, delta).unwrap();
            let r = cfg.rows(t).unwrap();
            // materialize D cell by cell from the index map
            let mut d = vec![vec![0.0; t]; r * m];
            for i in 0..r {
                for j in 0..m {
                    d[i * m + j][i + j * delta] = 1.0;
                }
            }
            let grid: Vec<f64> = (0..r * m).map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.3).collect();
            let mut normal = vec![vec![0.0; t]; t];
            let mut rhs = vec![0.0; t];
            for (row, g) in d.iter().zip(&grid) {
                for a in 0..t {
                    rhs[a] += row[a] * g;
                    for b in 0..t {
                        normal[a][b] += row[a] * row[b];
                    }
                }
            }
            let expected = solve_dense(normal, rhs);
            let got = inverse_embed(&grid, &cfg, t).unwrap();
            for (e, g) in expected.iter().zip(&got) {
                assert!((e - g).abs() < 1e-12, "m={m} delta={delta} t={t}: {e} vs {g}");
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip_and_coverage(m in 1usize..6, delta in 1usize..4, extra in 1usize..30, seed in 0u64..1000) {
            let t = (m - 1) * delta + delta + extra - 1;
            let cfg = DelayConfig::new(m, delta).unwrap();
            let x: Vec<f64> = (0..t).map(|i| ((i as u64 * 7919 + seed) % 101) as f64 - 50.0).collect();
            let g = delay_embed(&x, &cfg).unwrap();
            prop_assert_eq!(inverse_embed(g.data(), &cfg, t).unwrap(), x);
            let counts = overlap_counts(&cfg, t).unwrap();
            prop_assert!(counts.iter().all(|&c| c >= 1));
            prop_assert_eq!(counts.iter().sum::<usize>(), cfg.rows(t).unwrap() * m);
        }

        #[test]
        fn inverse_is_linear(m in 1usize..5, delta in 1usize..3, extra in 1usize..20, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let t = (m - 1) * delta + delta + extra - 1;
            let cfg = DelayConfig::new(m, delta).unwrap();
            let n = cfg.rows(t).unwrap() * m;
            let g1: Vec<f64> = (0..n).map(|k| (k as f64 * 0.37).sin()).collect();
            let g2: Vec<f64> = (0..n).map(|k| (k as f64 * 1.3).cos()).collect();
            let mix: Vec<f64> = g1.iter().zip(&g2).map(|(p, q)| a * p + b * q).collect();
            let lhs = inverse_embed(&mix, &cfg, t).unwrap();
            let r1 = inverse_embed(&g1, &cfg, t).unwrap();
            let r2 = inverse_embed(&g2, &cfg, t).unwrap();
            for i in 0..t {
                prop_assert!((lhs[i] - (a * r1[i] + b * r2[i])).abs() < 1e-12);
            }
        }
    }
}
