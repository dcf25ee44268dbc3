//! Factorized coordinate network with Fourier features, sine layers and
//! latent-driven modulations.
//!
//! A prediction at grid cell `(c₁, c₂)` is `u(c₁)ᵀ C v(c₂)`, where `u` and `v`
//! come from two independent mapping networks and `C` is a small core matrix.
//! Each mapping network has its own hypernetwork turning the shared latent
//! code `φ` into per-layer amplitude modulations.
//!
//! Weights are stored in row-vector convention: a dense layer maps a batch
//! `X (n × in)` to `X W + b` with `W: in × out` and `b: 1 × out`.

mod crf;
mod forward;
mod lipschitz;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;
use crate::tensor::Tensor;

pub use crf::{crf_features, CrfConfig, SineLayer};
pub use forward::{
    factorized_forward, grid_taped, mapping_forward, modulations_from_latent, AxisInput, GridInput, ModelVars,
};
pub use lipschitz::{latent_lipschitz_bound, lipschitz_bound, mapping_bounds, MappingBounds};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of modulated sine layers `L`.
    pub layers: usize,
    pub hidden: usize,
    /// Fourier features per scale (`d_B`, even).
    pub features_per_scale: usize,
    pub scales: Vec<f64>,
    /// Per-layer feature scales; the first `layers` entries are used.
    pub layer_scales: Vec<f64>,
    /// Output width of the row-axis network (`n₁`).
    pub row_rank: usize,
    /// Output width of the column-axis network (`n₂`).
    pub col_rank: usize,
    pub latent_dim: usize,
    /// Frequency factor of the sine-layer initialization.
    pub omega0: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 128,
            features_per_scale: 32,
            scales: vec![0.01, 0.1, 1.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            layer_scales: vec![10.0, 5.0, 1.0, 0.1, 0.01],
            row_rank: 16,
            col_rank: 16,
            latent_dim: 64,
            omega0: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: String| Err(Error::Config(format!("model.{field}: {msg}")));
        for (name, v) in [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("row_rank", self.row_rank),
            ("col_rank", self.col_rank),
            ("latent_dim", self.latent_dim),
        ] {
            if v == 0 {
                return err(name, "must be positive".into());
            }
        }
        if self.layer_scales.len() < self.layers {
            return err(
                "layer_scales",
                format!("needs at least {} entries, got {}", self.layers, self.layer_scales.len()),
            );
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return err("omega0", "must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: T,
    pub bias: T,
}

/// One axis network: an input layer on the Fourier features, `L` modulated
/// sine layers, a ReLU head on each of `h⁽¹⁾ … h⁽ᴸ⁾` and a linear head on
/// `h⁽ᴸ⁺¹⁾`. The output is the sum of all heads.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingNet<T> {
    pub input: Dense<T>,
    pub hidden: Vec<Dense<T>>,
    pub heads: Vec<Dense<T>>,
    pub output: Dense<T>,
}

/// `L + 1` affine maps from the latent code to the hidden width.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperNet<T> {
    pub layers: Vec<Dense<T>>,
}

/// Every trainable array of the model, generic so the same layout can hold
/// values, tape handles, gradients or optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    pub axes: [MappingNet<T>; 2],
    pub hypers: [HyperNet<T>; 2],
    /// Core matrix `C`, `row_rank × col_rank`.
    pub core: T,
}

pub type MappingNetParams = MappingNet<Tensor>;
pub type HyperNetParams = HyperNet<Tensor>;

impl<T> Dense<T> {
    fn try_map<U, E>(&self, name: &str, f: &mut impl FnMut(&str, &T) -> Result<U, E>) -> Result<Dense<U>, E> {
        Ok(Dense {
            weight: f(&format!("{name}.weight"), &self.weight)?,
            bias: f(&format!("{name}.bias"), &self.bias)?,
        })
    }

    fn visit<'a>(&'a self, name: &str, f: &mut impl FnMut(&str, &'a T)) {
        f(&format!("{name}.weight"), &self.weight);
        f(&format!("{name}.bias"), &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, name: &str, f: &mut impl FnMut(&str, &'a mut T)) {
        f(&format!("{name}.weight"), &mut self.weight);
        f(&format!("{name}.bias"), &mut self.bias);
    }
}

impl<T> MappingNet<T> {
    fn try_map<U, E>(&self, name: &str, f: &mut impl FnMut(&str, &T) -> Result<U, E>) -> Result<MappingNet<U>, E> {
        Ok(MappingNet {
            input: self.input.try_map(&format!("{name}.input"), f)?,
            hidden: (self.hidden.iter().enumerate())
                .map(|(l, d)| d.try_map(&format!("{name}.hidden{}", l + 1), f))
                .collect::<Result<_, E>>()?,
            heads: (self.heads.iter().enumerate())
                .map(|(l, d)| d.try_map(&format!("{name}.head{}", l + 1), f))
                .collect::<Result<_, E>>()?,
            output: self.output.try_map(&format!("{name}.output"), f)?,
        })
    }

    fn visit<'a>(&'a self, name: &str, f: &mut impl FnMut(&str, &'a T)) {
        self.input.visit(&format!("{name}.input"), f);
        for (l, d) in self.hidden.iter().enumerate() {
            d.visit(&format!("{name}.hidden{}", l + 1), f);
        }
        for (l, d) in self.heads.iter().enumerate() {
            d.visit(&format!("{name}.head{}", l + 1), f);
        }
        self.output.visit(&format!("{name}.output"), f);
    }

    fn visit_mut<'a>(&'a mut self, name: &str, f: &mut impl FnMut(&str, &'a mut T)) {
        self.input.visit_mut(&format!("{name}.input"), f);
        for (l, d) in self.hidden.iter_mut().enumerate() {
            d.visit_mut(&format!("{name}.hidden{}", l + 1), f);
        }
        for (l, d) in self.heads.iter_mut().enumerate() {
            d.visit_mut(&format!("{name}.head{}", l + 1), f);
        }
        self.output.visit_mut(&format!("{name}.output"), f);
    }

    pub fn layers(&self) -> usize {
        self.hidden.len()
    }
}

impl<T> HyperNet<T> {
    fn try_map<U, E>(&self, name: &str, f: &mut impl FnMut(&str, &T) -> Result<U, E>) -> Result<HyperNet<U>, E> {
        Ok(HyperNet {
            layers: (self.layers.iter().enumerate())
                .map(|(l, d)| d.try_map(&format!("{name}.s{l}"), f))
                .collect::<Result<_, E>>()?,
        })
    }

    fn visit<'a>(&'a self, name: &str, f: &mut impl FnMut(&str, &'a T)) {
        for (l, d) in self.layers.iter().enumerate() {
            d.visit(&format!("{name}.s{l}"), f);
        }
    }

    fn visit_mut<'a>(&'a mut self, name: &str, f: &mut impl FnMut(&str, &'a mut T)) {
        for (l, d) in self.layers.iter_mut().enumerate() {
            d.visit_mut(&format!("{name}.s{l}"), f);
        }
    }
}

impl<T> Weights<T> {
    /// Rebuild the layout with `f` applied to every entry, in canonical
    /// order: row axis, column axis, row hypernet, column hypernet, core.
    pub fn try_map<U, E>(&self, mut f: impl FnMut(&str, &T) -> Result<U, E>) -> Result<Weights<U>, E> {
        let a0 = self.axes[0].try_map("axis1", &mut f)?;
        let a1 = self.axes[1].try_map("axis2", &mut f)?;
        let h0 = self.hypers[0].try_map("hyper1", &mut f)?;
        let h1 = self.hypers[1].try_map("hyper2", &mut f)?;
        let core = f("core", &self.core)?;
        Ok(Weights {
            axes: [a0, a1],
            hypers: [h0, h1],
            core,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> Weights<U> {
        self.try_map(|n, t| Ok::<U, std::convert::Infallible>(f(n, t)))
            .unwrap_or_else(|e| match e {})
    }

    pub fn visit_mut<'a>(&'a mut self, mut f: impl FnMut(&str, &'a mut T)) {
        let Weights {
            axes: [a0, a1],
            hypers: [h0, h1],
            core,
        } = self;
        a0.visit_mut("axis1", &mut f);
        a1.visit_mut("axis2", &mut f);
        h0.visit_mut("hyper1", &mut f);
        h1.visit_mut("hyper2", &mut f);
        f("core", core);
    }

    pub fn visit<'a>(&'a self, mut f: impl FnMut(&str, &'a T)) {
        self.axes[0].visit("axis1", &mut f);
        self.axes[1].visit("axis2", &mut f);
        self.hypers[0].visit("hyper1", &mut f);
        self.hypers[1].visit("hyper2", &mut f);
        f("core", &self.core);
    }

    /// Entries with their names, in canonical order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.visit(|n, t| out.push((n.to_string(), t)));
        out
    }

    pub fn entries(&self) -> Vec<&T> {
        let mut out = Vec::new();
        self.visit(|_, t| out.push(t));
        out
    }

    pub fn entries_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::new();
        self.visit_mut(|_, t| out.push(t));
        out
    }
}

impl Weights<Tensor> {
    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.all_finite())
    }
}

/// Per-instance latent code `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    pub values: Vec<f64>,
}

impl LatentCode {
    pub fn zeros(dim: usize) -> Self {
        Self { values: vec![0.0; dim] }
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("latent code has non-finite entries"));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `1 × dim` row.
    pub fn as_row(&self) -> Tensor {
        Tensor::row(self.values.clone())
    }

    /// `μ φ₁ + (1 − μ) φ₂`.
    pub fn interpolate(a: &LatentCode, b: &LatentCode, mu: f64) -> Result<LatentCode> {
        if a.dim() != b.dim() {
            return Err(Error::dim(format!("latent dims differ: {} vs {}", a.dim(), b.dim())));
        }
        if !(0.0..=1.0).contains(&mu) {
            return Err(Error::contract(format!("interpolation weight must be in [0, 1], got {mu}")));
        }
        let values = a.values.iter().zip(&b.values).map(|(x, y)| mu * x + (1.0 - mu) * y).collect();
        Ok(LatentCode { values })
    }
}

/// Everything needed to evaluate the model: architecture, frozen Fourier
/// features and trainable weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub crf: CrfConfig,
    pub weights: Weights<Tensor>,
}

impl ModelParams {
    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn zero_latent(&self) -> LatentCode {
        LatentCode::zeros(self.config.latent_dim)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let c = &self.config;
        let (f, d, k) = (self.crf.output_dim(), c.hidden, c.latent_dim);
        let expect = |name: &str, t: &Tensor, shape: [usize; 2]| -> Result<()> {
            if t.shape() != shape {
                return Err(Error::dim(format!("{name} has shape {:?}, expected {shape:?}", t.shape())));
            }
            Ok(())
        };
        for (a, rank) in [c.row_rank, c.col_rank].into_iter().enumerate() {
            let net = &self.weights.axes[a];
            if net.hidden.len() != c.layers || net.heads.len() != c.layers {
                return Err(Error::dim(format!("axis {} has the wrong number of layers", a + 1)));
            }
            expect("input.weight", &net.input.weight, [f, d])?;
            expect("input.bias", &net.input.bias, [1, d])?;
            for l in &net.hidden {
                expect("hidden.weight", &l.weight, [d, d])?;
                expect("hidden.bias", &l.bias, [1, d])?;
            }
            for h in net.heads.iter().chain([&net.output]) {
                expect("head.weight", &h.weight, [d, rank])?;
                expect("head.bias", &h.bias, [1, rank])?;
            }
            let hyper = &self.weights.hypers[a];
            if hyper.layers.len() != c.layers + 1 {
                return Err(Error::dim(format!("hypernet {} has the wrong number of layers", a + 1)));
            }
            for s in &hyper.layers {
                expect("hyper.weight", &s.weight, [k, d])?;
                expect("hyper.bias", &s.bias, [1, d])?;
            }
        }
        expect("core", &self.weights.core, [c.row_rank, c.col_rank])?;
        if self.crf.layer_bases.len() != c.layers || self.crf.hidden() != d {
            return Err(Error::dim("layer feature blocks do not match the architecture"));
        }
        Ok(())
    }
}

/// Standard deviation of the hypernetwork weights at init.
const HYPER_INIT_STD: f64 = 0.1;
/// Target spread of the initial prediction, relative to unit-variance labels.
const CORE_INIT_GAIN: f64 = 0.03;

fn uniform_tensor(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(vec![rows, cols], data).expect("positive shape")
}

fn normal_tensor(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    let normal = Normal::new(0.0, std).expect("finite std");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Tensor::new(vec![rows, cols], data).expect("positive shape")
}

/// Sine-network initialization: weights `U(±√(6/fan_in)/ω₀)`, biases
/// `U(±1/√fan_in)`.
fn dense_init(rng: &mut impl Rng, fan_in: usize, fan_out: usize, omega0: f64) -> Dense<Tensor> {
    let w = (6.0 / fan_in as f64).sqrt() / omega0;
    let b = 1.0 / (fan_in as f64).sqrt();
    Dense {
        weight: uniform_tensor(rng, fan_in, fan_out, w),
        bias: uniform_tensor(rng, 1, fan_out, b),
    }
}

/// Deterministic initialization. The hypernetworks start at `b_s⁽⁰⁾ = 1`
/// and zero higher biases, so every modulation is 1 at `φ = 0`.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let (d, k) = (config.hidden, config.latent_dim);
    let crf = CrfConfig::new(
        &config.scales,
        config.features_per_scale,
        &config.layer_scales[..config.layers],
        d,
        seed,
    )?;
    let f = crf.output_dim();
    let ranks = [config.row_rank, config.col_rank];
    let axis = |a: usize| {
        let mut rng = seeding::rng(seed, "init-axis", &[a as u64]);
        let input = dense_init(&mut rng, f, d, config.omega0);
        let hidden = (0..config.layers).map(|_| dense_init(&mut rng, d, d, config.omega0)).collect();
        let heads = (0..config.layers).map(|_| dense_init(&mut rng, d, ranks[a], config.omega0)).collect();
        let output = dense_init(&mut rng, d, ranks[a], config.omega0);
        MappingNet {
            input,
            hidden,
            heads,
            output,
        }
    };
    let hyper = |a: usize| {
        let mut rng = seeding::rng(seed, "init-hyper", &[a as u64]);
        let layers = (0..=config.layers)
            .map(|l| Dense {
                weight: normal_tensor(&mut rng, k, d, HYPER_INIT_STD),
                bias: Tensor::full(&[1, d], if l == 0 { 1.0 } else { 0.0 }),
            })
            .collect();
        HyperNet { layers }
    };
    let mut rng = seeding::rng(seed, "init-core", &[]);
    let core_std = CORE_INIT_GAIN / ((config.row_rank * config.col_rank) as f64).sqrt();
    let params = ModelParams {
        config: config.clone(),
        crf,
        weights: Weights {
            axes: [axis(0), axis(1)],
            hypers: [hyper(0), hyper(1)],
            core: normal_tensor(&mut rng, config.row_rank, config.col_rank, core_std),
        },
    };
    params.validate()?;
    Ok(params)
}
