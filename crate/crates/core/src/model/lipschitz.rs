//! Analytic upper bounds on how fast the network output can change.
//!
//! Norms follow the row-vector convention: for `y = x W + b`,
//! `|y|∞ ≤ ‖W‖ |x|∞ + |b|∞` with `‖W‖ = maxⱼ Σᵢ |Wᵢⱼ|`.

use std::f64::consts::TAU;

use super::{modulations_from_latent, CrfConfig, Dense, LatentCode, MappingNetParams, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn op_norm(w: &Tensor) -> f64 {
    let (rows, cols) = w.dims2().expect("weights are matrices");
    let d = w.data();
    (0..cols)
        .map(|j| (0..rows).map(|i| d[i * cols + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Norm of the bias-augmented matrix `[W; b]`, which bounds `|xW + b|∞`
/// by `max(1, |x|∞)` times itself.
fn augmented_norm(layer: &Dense<Tensor>) -> f64 {
    let (rows, cols) = layer.weight.dims2().expect("weights are matrices");
    let (w, b) = (layer.weight.data(), layer.bias.data());
    (0..cols)
        .map(|j| (0..rows).map(|i| w[i * cols + j].abs()).sum::<f64>() + b[j].abs())
        .fold(0.0, f64::max)
}

fn max_frequency(bases: &[Vec<f64>]) -> f64 {
    bases.iter().map(|b| sup_norm(b)).fold(0.0, f64::max)
}

/// Lipschitz constant and sup-norm bound of one axis network, both with
/// respect to the ∞-norm of its output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingBounds {
    pub lipschitz: f64,
    pub sup: f64,
}

/// Layer-by-layer bound for an axis network with the given modulations.
pub fn mapping_bounds(net: &MappingNetParams, crf: &CrfConfig, mods: &[Vec<f64>]) -> Result<MappingBounds> {
    if mods.len() != net.layers() {
        return Err(Error::dim("one modulation per layer required"));
    }
    let head = |d: &Dense<Tensor>, lip: f64, sup: f64| (op_norm(&d.weight) * lip, op_norm(&d.weight) * sup + sup_norm(d.bias.data()));
    let mut lip = op_norm(&net.input.weight) * TAU * max_frequency(&crf.bases);
    let mut sup = augmented_norm(&net.input);
    let (mut out_lip, mut out_sup) = (0.0, 0.0);
    for (l, layer) in net.hidden.iter().enumerate() {
        let (hl, hs) = head(&net.heads[l], lip, sup);
        out_lip += hl;
        out_sup += hs;
        let feature_lip = TAU * sup_norm(&crf.layer_bases[l]) * op_norm(&crf.layer_projections[l]);
        let amp = sup_norm(&mods[l]);
        lip = amp * (op_norm(&layer.weight) * lip + feature_lip);
        sup = amp;
    }
    let (hl, hs) = head(&net.output, lip, sup);
    Ok(MappingBounds {
        lipschitz: out_lip + hl,
        sup: out_sup + hs,
    })
}

/// Largest weight-like magnitude of the model: the augmented norm of every
/// mapping layer, the projection norms and the top Fourier frequency
/// `2π max|B|`, floored at 1.
fn xi(params: &ModelParams) -> f64 {
    let crf = &params.crf;
    let mut xi = 1.0f64;
    for net in &params.weights.axes {
        for layer in [&net.input].into_iter().chain(&net.hidden).chain(&net.heads).chain([&net.output]) {
            xi = xi.max(augmented_norm(layer));
        }
    }
    for p in &crf.layer_projections {
        xi = xi.max(op_norm(p));
    }
    xi.max(TAU * max_frequency(&crf.bases)).max(TAU * max_frequency(&crf.layer_bases))
}

/// Largest modulation magnitude over the given latents, floored at 1.
fn eta(params: &ModelParams, latents: &[&LatentCode]) -> Result<f64> {
    let mut eta = 1.0f64;
    for phi in latents {
        for hyper in &params.weights.hypers {
            for m in modulations_from_latent(phi, hyper)? {
                eta = eta.max(sup_norm(&m));
            }
        }
    }
    Ok(eta)
}

/// Lipschitz constant of `(c₁, c₂) ↦ u(c₁)ᵀ C v(c₂)` at a fixed latent, with
/// respect to `max(|Δc₁|, |Δc₂|)`:
///
/// `K = κ · λ · ε^{2L} · ξ^{4L+2} · η^{2L} · ν`
///
/// with `ε = 1` (sine), `λ = Σ|Cᵢⱼ|`, `ξ` the largest layer norm or
/// frequency (at least 1), `η` the largest modulation magnitude (at least
/// 1), `ν = 1` for unit-interval coordinates and `κ = (L+1)²(L+2)`
/// collecting the number of paths through the layer-wise heads.
pub fn lipschitz_bound(params: &ModelParams, phi: &LatentCode) -> Result<f64> {
    let l = params.config.layers as i32;
    let lambda: f64 = params.weights.core.data().iter().map(|c| c.abs()).sum();
    let (xi, eta) = (xi(params), eta(params, &[phi])?);
    let (eps, nu) = (1.0f64, 1.0);
    let kappa = ((l + 1) * (l + 1) * (l + 2)) as f64;
    Ok(kappa * lambda * eps.powi(2 * l) * xi.powi(4 * l + 2) * eta.powi(2 * l) * nu)
}

/// Constant `B` with `|grid(φ) − grid(φ′)|∞ ≤ B |φ − φ′|∞` for latents on
/// the segment between `a` and `b`, in normalized output units.
///
/// Modulations are affine in `φ`, so their magnitude on the segment is
/// bounded by the endpoints, and `B = λ L (L+1)² ξ^{L+2} η^L A` where `A`
/// bounds how fast any modulation moves with `φ`.
pub fn latent_lipschitz_bound(params: &ModelParams, a: &LatentCode, b: &LatentCode) -> Result<f64> {
    let l = params.config.layers as i32;
    let lambda: f64 = params.weights.core.data().iter().map(|c| c.abs()).sum();
    let (xi, eta) = (xi(params), eta(params, &[a, b])?);
    let mut a_norm = 0.0f64;
    for hyper in &params.weights.hypers {
        let mut acc = Tensor::zeros(hyper.layers[0].weight.shape());
        for layer in &hyper.layers {
            acc.data_mut().iter_mut().zip(layer.weight.data()).for_each(|(s, w)| *s += w);
            a_norm = a_norm.max(op_norm(&acc));
        }
    }
    let k = (l * (l + 1) * (l + 1)) as f64;
    Ok(k * lambda * xi.powi(l + 2) * eta.powi(l) * a_norm)
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::super::{factorized_forward, init_params, mapping_forward, ModelConfig};
    use super::*;
    use crate::seeding;

    fn config() -> ModelConfig {
        ModelConfig {
            layers: 2,
            hidden: 10,
            features_per_scale: 4,
            scales: vec![0.5, 2.0],
            layer_scales: vec![2.0, 1.0],
            row_rank: 3,
            col_rank: 3,
            latent_dim: 4,
            omega0: 1.0,
        }
    }

    fn phi() -> LatentCode {
        LatentCode::new(vec![0.3, -0.2, 0.5, 0.1]).unwrap()
    }

    #[test]
    fn zero_weights_give_zero() {
        let mut p = init_params(&config(), 1).unwrap();
        p.weights.visit_mut(|_, t| *t = Tensor::zeros(t.shape()));
        assert_eq!(lipschitz_bound(&p, &phi()).unwrap(), 0.0);
    }

    #[test]
    fn sampled_quotients_stay_below_both_bounds() {
        let p = init_params(&config(), 2).unwrap();
        let phi = phi();
        let k = lipschitz_bound(&p, &phi).unwrap();
        let w = &p.weights;
        let mu = modulations_from_latent(&phi, &w.hypers[0]).unwrap();
        let mv = modulations_from_latent(&phi, &w.hypers[1]).unwrap();
        let bu = mapping_bounds(&w.axes[0], &p.crf, &mu).unwrap();
        let bv = mapping_bounds(&w.axes[1], &p.crf, &mv).unwrap();
        let lambda: f64 = w.core.data().iter().map(|c| c.abs()).sum();
        let layered = lambda * (bu.lipschitz * bv.sup + bu.sup * bv.lipschitz);
        assert!(layered <= k, "layer-wise {layered} exceeds closed form {k}");

        let mut rng = seeding::rng(0, "lipschitz-test", &[]);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let (a1, a2, b1, b2): (f64, f64, f64, f64) = (rng.random(), rng.random(), rng.random(), rng.random());
            let dist = (a1 - b1).abs().max((a2 - b2).abs());
            if dist == 0.0 {
                continue;
            }
            let fa = factorized_forward(a1, a2, &phi, &p).unwrap();
            let fb = factorized_forward(b1, b2, &phi, &p).unwrap();
            worst = worst.max((fa - fb).abs() / dist);

            let ua = mapping_forward(a1, &w.axes[0], &p.crf, &mu).unwrap();
            let ub = mapping_forward(b1, &w.axes[0], &p.crf, &mu).unwrap();
            let du = ua.iter().zip(&ub).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(du <= bu.lipschitz * (a1 - b1).abs() + 1e-12);
            assert!(sup_norm(&ua) <= bu.sup);
        }
        assert!(worst <= layered, "{worst} > {layered}");
    }

    #[test]
    fn doubling_every_mapping_weight_scales_by_the_exponent() {
        let mut cfg = config();
        cfg.hidden = 40;
        let p = init_params(&cfg, 3).unwrap();
        let phi = phi();
        let base = lipschitz_bound(&p, &phi).unwrap();
        assert!(xi(&p) > 1.0);
        let mut q = p.clone();
        for net in &mut q.weights.axes {
            let mut scale = |d: &mut Dense<Tensor>| {
                d.weight.scale_in_place(2.0);
                d.bias.scale_in_place(2.0);
            };
            scale(&mut net.input);
            net.hidden.iter_mut().for_each(&mut scale);
            net.heads.iter_mut().for_each(&mut scale);
            scale(&mut net.output);
        }
        q.crf.bases.iter_mut().flatten().for_each(|b| *b *= 2.0);
        q.crf.layer_bases.iter_mut().flatten().for_each(|b| *b *= 2.0);
        q.crf.layer_projections.iter_mut().for_each(|t| t.scale_in_place(2.0));
        assert!((xi(&q) / xi(&p) - 2.0).abs() < 1e-12);
        let ratio = lipschitz_bound(&q, &phi).unwrap() / base;
        let expect = 2f64.powi(4 * 2 + 2);
        assert!((ratio / expect - 1.0).abs() < 1e-12, "{ratio}");
    }

    #[test]
    fn latent_bound_contains_grid_changes() {
        let p = init_params(&config(), 4).unwrap();
        let a = LatentCode::new(vec![1.0, -0.5, 0.2, 0.0]).unwrap();
        let b = LatentCode::new(vec![-0.3, 0.4, 0.9, -1.0]).unwrap();
        let bound = latent_lipschitz_bound(&p, &a, &b).unwrap();
        let coords: Vec<f64> = (0..7).map(|i| i as f64 / 6.0).collect();
        let input = p.grid_input(&coords, &coords[..3]).unwrap();
        let mut prev = p.predict_grid(&input, &b).unwrap();
        for step in 1..=20 {
            let mu = step as f64 / 20.0;
            let cur = p.predict_grid(&input, &LatentCode::interpolate(&a, &b, mu).unwrap()).unwrap();
            let jump = cur.data().iter().zip(prev.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let dphi = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / 20.0;
            assert!(jump <= bound * dphi, "{jump} > {}", bound * dphi);
            prev = cur;
        }
    }
}
