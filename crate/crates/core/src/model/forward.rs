use super::{crf_features, CrfConfig, Dense, HyperNet, HyperNetParams, LatentCode, MappingNet, MappingNetParams, ModelParams, Weights};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Tape handles for every weight of a model.
pub type ModelVars = Weights<Var>;

/// Coordinate-dependent constants of one axis: the Fourier features and the
/// projected per-layer features of every coordinate. They do not depend on
/// trainable weights, so a task computes them once.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisInput {
    pub coords: Vec<f64>,
    pub features: Tensor,
    pub layer_features: Vec<Tensor>,
}

impl AxisInput {
    pub fn new(crf: &CrfConfig, coords: &[f64]) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::dim("axis needs at least one coordinate"));
        }
        let layer_features = (0..crf.layer_bases.len())
            .map(|l| crf.layer_features_batch(l, coords))
            .collect::<Result<_>>()?;
        Ok(Self {
            coords: coords.to_vec(),
            features: crf.features_batch(coords)?,
            layer_features,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Row and column inputs of a prediction grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridInput {
    pub rows: AxisInput,
    pub cols: AxisInput,
}

impl GridInput {
    pub fn new(crf: &CrfConfig, row_coords: &[f64], col_coords: &[f64]) -> Result<Self> {
        Ok(Self {
            rows: AxisInput::new(crf, row_coords)?,
            cols: AxisInput::new(crf, col_coords)?,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }
}

impl Weights<Tensor> {
    /// Put every weight on the tape, as trainable leaves or as constants.
    pub fn record(&self, tape: &mut Tape, trainable: bool) -> ModelVars {
        self.map(|_, t| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
    }
}

fn dense(tape: &mut Tape, x: Var, layer: &Dense<Var>) -> Result<Var> {
    let y = tape.matmul(x, layer.weight)?;
    tape.add(y, layer.bias)
}

/// `δ⁽⁰⁾ = φ W_s⁽⁰⁾ + b_s⁽⁰⁾`, `δ⁽ˡ⁾ = δ⁽ˡ⁻¹⁾ + φ W_s⁽ˡ⁾ + b_s⁽ˡ⁾`; returns
/// `δ⁽¹⁾ … δ⁽ᴸ⁾` as `1 × d` rows.
pub(crate) fn modulations_taped(tape: &mut Tape, hyper: &HyperNet<Var>, phi: Var) -> Result<Vec<Var>> {
    let mut acc = dense(tape, phi, &hyper.layers[0])?;
    let mut out = Vec::with_capacity(hyper.layers.len() - 1);
    for layer in &hyper.layers[1..] {
        let s = dense(tape, phi, layer)?;
        acc = tape.add(acc, s)?;
        out.push(acc);
    }
    Ok(out)
}

/// Batched axis network, `n × rank`.
pub(crate) fn mapping_taped(tape: &mut Tape, net: &MappingNet<Var>, input: &AxisInput, mods: &[Var]) -> Result<Var> {
    if mods.len() != net.layers() || input.layer_features.len() < net.layers() {
        return Err(Error::dim(format!(
            "network has {} layers but got {} modulations and {} feature blocks",
            net.layers(),
            mods.len(),
            input.layer_features.len()
        )));
    }
    let gamma = tape.constant(input.features.clone());
    let pre = dense(tape, gamma, &net.input)?;
    let mut h = tape.relu(pre);
    let mut out: Option<Var> = None;
    for (l, layer) in net.hidden.iter().enumerate() {
        let head = dense(tape, h, &net.heads[l])?;
        let head = tape.relu(head);
        out = Some(match out {
            Some(o) => tape.add(o, head)?,
            None => head,
        });
        let z = dense(tape, h, layer)?;
        let g = tape.constant(input.layer_features[l].clone());
        let z = tape.add(z, g)?;
        let s = tape.sin(z);
        h = tape.mul(s, mods[l])?;
    }
    let last = dense(tape, h, &net.output)?;
    match out {
        Some(o) => tape.add(o, last),
        None => Ok(last),
    }
}

/// `U C Vᵀ` over the whole grid, `rows × cols`.
pub fn grid_taped(tape: &mut Tape, w: &ModelVars, input: &GridInput, phi: Var) -> Result<Var> {
    let mods_u = modulations_taped(tape, &w.hypers[0], phi)?;
    let mods_v = modulations_taped(tape, &w.hypers[1], phi)?;
    let u = mapping_taped(tape, &w.axes[0], &input.rows, &mods_u)?;
    let v = mapping_taped(tape, &w.axes[1], &input.cols, &mods_v)?;
    let uc = tape.matmul(u, w.core)?;
    let vt = tape.transpose(v)?;
    tape.matmul(uc, vt)
}

impl ModelParams {
    /// Grid prediction for a fixed latent code, without gradients.
    pub fn predict_grid(&self, input: &GridInput, phi: &LatentCode) -> Result<Tensor> {
        if phi.dim() != self.config.latent_dim {
            return Err(Error::dim(format!(
                "latent has {} entries, model expects {}",
                phi.dim(),
                self.config.latent_dim
            )));
        }
        let mut tape = Tape::new();
        let w = self.weights.record(&mut tape, false);
        let p = tape.constant(phi.as_row());
        let out = grid_taped(&mut tape, &w, input, p)?;
        Ok(tape.value(out).clone())
    }

    pub fn grid_input(&self, row_coords: &[f64], col_coords: &[f64]) -> Result<GridInput> {
        GridInput::new(&self.crf, row_coords, col_coords)
    }
}

// Loop-based single-coordinate path. It shares no code with the batched
// tape path, which lets each check the other.

fn affine(x: &[f64], layer: &Dense<Tensor>) -> Result<Vec<f64>> {
    let (rows, cols) = layer.weight.dims2()?;
    if x.len() != rows || layer.bias.len() != cols {
        return Err(Error::dim(format!(
            "input of length {} does not fit a {rows}x{cols} layer",
            x.len()
        )));
    }
    let w = layer.weight.data();
    let mut out = layer.bias.data().to_vec();
    for (i, &xi) in x.iter().enumerate() {
        for (o, &wij) in out.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
            *o += xi * wij;
        }
    }
    Ok(out)
}

/// Modulations `δ⁽¹⁾ … δ⁽ᴸ⁾` for a latent code.
pub fn modulations_from_latent(phi: &LatentCode, hyper: &HyperNetParams) -> Result<Vec<Vec<f64>>> {
    let mut acc = affine(&phi.values, &hyper.layers[0])?;
    let mut out = Vec::with_capacity(hyper.layers.len() - 1);
    for layer in &hyper.layers[1..] {
        let s = affine(&phi.values, layer)?;
        acc.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        out.push(acc.clone());
    }
    Ok(out)
}

/// Axis network at a single coordinate.
pub fn mapping_forward(c: f64, net: &MappingNetParams, crf: &CrfConfig, mods: &[Vec<f64>]) -> Result<Vec<f64>> {
    if mods.len() != net.layers() {
        return Err(Error::dim(format!(
            "network has {} layers but got {} modulations",
            net.layers(),
            mods.len()
        )));
    }
    let gamma = crf_features(c, crf);
    let mut h: Vec<f64> = affine(&gamma, &net.input)?.into_iter().map(|v| v.max(0.0)).collect();
    let mut out = vec![0.0; net.output.bias.len()];
    for (l, layer) in net.hidden.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(affine(&h, &net.heads[l])?) {
            *o += v.max(0.0);
        }
        let raw = crf.layer_features(l, c);
        let g = affine(&raw, &Dense {
            weight: crf.layer_projections[l].clone(),
            bias: Tensor::zeros(&[1, crf.hidden()]),
        })?;
        let z = affine(&h, layer)?;
        if mods[l].len() != z.len() {
            return Err(Error::dim("modulation width differs from hidden width"));
        }
        h = z.iter().zip(&g).zip(&mods[l]).map(|((z, g), d)| d * (z + g).sin()).collect();
    }
    for (o, v) in out.iter_mut().zip(affine(&h, &net.output)?) {
        *o += v;
    }
    Ok(out)
}

/// `u(c₁)ᵀ C v(c₂)` at one cell.
pub fn factorized_forward(c1: f64, c2: f64, phi: &LatentCode, params: &ModelParams) -> Result<f64> {
    let w = &params.weights;
    let mu = modulations_from_latent(phi, &w.hypers[0])?;
    let mv = modulations_from_latent(phi, &w.hypers[1])?;
    let u = mapping_forward(c1, &w.axes[0], &params.crf, &mu)?;
    let v = mapping_forward(c2, &w.axes[1], &params.crf, &mv)?;
    let (r, k) = w.core.dims2()?;
    if u.len() != r || v.len() != k {
        return Err(Error::dim("axis outputs do not match the core matrix"));
    }
    let c = w.core.data();
    let mut total = 0.0;
    for i in 0..r {
        for j in 0..k {
            total += u[i] * c[i * k + j] * v[j];
        }
    }
    Ok(total)
}
