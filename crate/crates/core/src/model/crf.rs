use std::f64::consts::{FRAC_PI_2, TAU};

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seeding;
use crate::tensor::Tensor;

/// Variance of the fixed projection that maps a per-layer feature block onto
/// the hidden width is `LAYER_GAIN / features_per_scale`.
const LAYER_GAIN: f64 = 0.25;

/// Concatenated random Fourier features at several scales, plus one
/// single-scale feature block per hidden layer.
///
/// The per-layer blocks are mapped to the hidden width by fixed seeded
/// projections so they can be added to pre-activations. Everything here is
/// drawn once from the seed and never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfConfig {
    pub scales: Vec<f64>,
    pub features_per_scale: usize,
    /// One `features_per_scale / 2` frequency vector per scale.
    pub bases: Vec<Vec<f64>>,
    pub layer_scales: Vec<f64>,
    pub layer_bases: Vec<Vec<f64>>,
    /// `features_per_scale × hidden`, one per layer.
    pub layer_projections: Vec<Tensor>,
    pub seed: u64,
}

impl CrfConfig {
    pub fn new(scales: &[f64], features_per_scale: usize, layer_scales: &[f64], hidden: usize, seed: u64) -> Result<Self> {
        if features_per_scale == 0 || features_per_scale % 2 != 0 {
            return Err(Error::Config(format!(
                "model.features_per_scale must be even and positive, got {features_per_scale}"
            )));
        }
        if scales.is_empty() || scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("model.scales must be a non-empty list of positive numbers".into()));
        }
        if layer_scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("model.layer_scales must be positive".into()));
        }
        if layer_scales.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config("model.layer_scales must be non-increasing".into()));
        }
        let half = features_per_scale / 2;
        let draw = |sigma: f64, label: &str, k: usize| -> Vec<f64> {
            let mut rng = seeding::rng(seed, label, &[k as u64]);
            let normal = Normal::new(0.0, sigma).expect("positive scale");
            (0..half).map(|_| normal.sample(&mut rng)).collect()
        };
        let bases = scales.iter().enumerate().map(|(k, &s)| draw(s, "crf-basis", k)).collect();
        let layer_bases = layer_scales.iter().enumerate().map(|(l, &s)| draw(s, "crf-layer-basis", l)).collect();
        let proj_std = (LAYER_GAIN / features_per_scale as f64).sqrt();
        let layer_projections = (0..layer_scales.len())
            .map(|l| {
                let mut rng = seeding::rng(seed, "crf-layer-projection", &[l as u64]);
                let normal = Normal::new(0.0, proj_std).expect("positive std");
                let data = (0..features_per_scale * hidden).map(|_| normal.sample(&mut rng)).collect();
                Tensor::matrix(features_per_scale, hidden, data)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            scales: scales.to_vec(),
            features_per_scale,
            bases,
            layer_scales: layer_scales.to_vec(),
            layer_bases,
            layer_projections,
            seed,
        })
    }

    /// `d_B · N_f`.
    pub fn output_dim(&self) -> usize {
        self.features_per_scale * self.scales.len()
    }

    pub fn hidden(&self) -> usize {
        self.layer_projections.first().map_or(0, |p| p.shape()[1])
    }

    /// Features of a batch of coordinates, `n × output_dim`.
    pub fn features_batch(&self, coords: &[f64]) -> Result<Tensor> {
        let f = self.output_dim();
        let mut data = Vec::with_capacity(coords.len() * f);
        for &c in coords {
            for basis in &self.bases {
                fourier_block(basis, c, &mut data);
            }
        }
        Tensor::matrix(coords.len(), f, data)
    }

    /// Raw (unprojected) per-layer features of one coordinate.
    pub fn layer_features(&self, layer: usize, c: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.features_per_scale);
        fourier_block(&self.layer_bases[layer], c, &mut out);
        out
    }

    /// Projected per-layer features, `n × hidden`.
    pub fn layer_features_batch(&self, layer: usize, coords: &[f64]) -> Result<Tensor> {
        let mut raw = Vec::with_capacity(coords.len() * self.features_per_scale);
        for &c in coords {
            fourier_block(&self.layer_bases[layer], c, &mut raw);
        }
        Tensor::matrix(coords.len(), self.features_per_scale, raw)?.matmul(&self.layer_projections[layer])
    }

    /// The same features written as one sine layer `sin(2π B' c + ρ)`, with
    /// each basis repeated and the cosine half phase-shifted by π/2.
    pub fn as_sine_layer(&self) -> SineLayer {
        let mut frequencies = Vec::with_capacity(self.output_dim());
        let mut phases = Vec::with_capacity(self.output_dim());
        for basis in &self.bases {
            frequencies.extend_from_slice(basis);
            phases.extend(std::iter::repeat_n(0.0, basis.len()));
            frequencies.extend_from_slice(basis);
            phases.extend(std::iter::repeat_n(FRAC_PI_2, basis.len()));
        }
        SineLayer { frequencies, phases }
    }
}

fn fourier_block(basis: &[f64], c: f64, out: &mut Vec<f64>) {
    out.extend(basis.iter().map(|b| (TAU * b * c).sin()));
    out.extend(basis.iter().map(|b| (TAU * b * c).cos()));
}

/// `[sin(2π Bₖ c), cos(2π Bₖ c)]` concatenated over scales.
pub fn crf_features(c: f64, config: &CrfConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(config.output_dim());
    for basis in &config.bases {
        fourier_block(basis, c, &mut out);
    }
    out
}

/// `x ↦ sin(2π f x + ρ)` elementwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SineLayer {
    pub frequencies: Vec<f64>,
    pub phases: Vec<f64>,
}

impl SineLayer {
    pub fn eval(&self, c: f64) -> Vec<f64> {
        self.frequencies
            .iter()
            .zip(&self.phases)
            .map(|(f, p)| (TAU * f * c + p).sin())
            .collect()
    }
}
