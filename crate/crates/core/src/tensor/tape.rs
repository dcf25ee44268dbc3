use std::sync::Arc;

use super::{gemm, SparseMatrix, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Deliberate corruption of a backward rule, used as a negative control for
/// gradient checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardFault {
    /// `d sin(x) = -cos(x)` instead of `cos(x)`.
    SinSignFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    None,
    /// Right operand is a row repeated over the rows of the left operand.
    Rhs,
    /// Left operand is a row repeated over the rows of the right operand.
    Lhs,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    Sin(Var),
    Cos(Var),
    Relu(Var),
    Square(Var),
    Scale(Var, f64),
    Sum(Var, Option<usize>),
    Mean(Var, Option<usize>),
    Sparse(Var, Arc<SparseMatrix>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records one forward pass. Operations are appended in execution order, so
/// the node list is already topologically sorted; `backward` walks it once in
/// reverse. A tape is meant to be dropped after its backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<BackwardFault>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn inject_fault(&mut self, fault: BackwardFault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, |bc| Op::Add(a, b, bc))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, |bc| Op::Sub(a, b, bc))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, |bc| Op::Mul(a, b, bc))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, f64::sin, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, f64::cos, Op::Cos(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.unary(a, |x| x * factor, Op::Scale(a, factor))
    }

    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        let out = reduce(self.value(a), axis)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Sum(a, axis), rg))
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        let count = reduce_count(self.value(a), axis)?;
        let mut out = reduce(self.value(a), axis)?;
        out.scale_in_place(1.0 / count as f64);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Mean(a, axis), rg))
    }

    /// `S · vec(a)` for a fixed sparse `S`; the result is a vector.
    pub fn sparse_map(&mut self, a: Var, map: Arc<SparseMatrix>) -> Result<Var> {
        let x = self.value(a);
        if x.len() != map.cols() {
            return Err(Error::dim(format!(
                "sparse map expects {} inputs, got {}",
                map.cols(),
                x.len()
            )));
        }
        let out = Tensor::vector(map.apply(x.data()));
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Sparse(a, map), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(out, op, rg)
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(Bcast) -> Op,
    ) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let bc = broadcast_kind(x.shape(), y.shape())?;
        let out = match bc {
            Bcast::None => Tensor {
                shape: x.shape.clone(),
                data: x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect(),
            },
            Bcast::Rhs => {
                let n = y.len();
                Tensor {
                    shape: x.shape.clone(),
                    data: x.data.iter().enumerate().map(|(i, &p)| f(p, y.data[i % n])).collect(),
                }
            }
            Bcast::Lhs => {
                let n = x.len();
                Tensor {
                    shape: y.shape.clone(),
                    data: y.data.iter().enumerate().map(|(i, &q)| f(x.data[i % n], q)).collect(),
                }
            }
        };
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, op(bc), rg))
    }

    /// Reverse sweep from a scalar `loss`. Gradients are summed over every
    /// path; only nodes that depend on a trainable leaf are visited.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        if root.requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let mut out: Vec<Option<Tensor>> = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.map(|data| Tensor {
                    shape: self.nodes[i].value.shape.clone(),
                    data,
                })
            })
            .collect();
        out.resize(self.nodes.len(), None);
        Ok(Gradients { grads: out })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape[0], av.shape[1]);
                let n = bv.shape[1];
                if self.requires_grad(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g, (n, 1), &bv.data, (1, n), &mut ga, false);
                    self.accum(grads, *a, ga);
                }
                if self.requires_grad(*b) {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, &av.data, (1, k), g, (n, 1), &mut gb, false);
                    self.accum(grads, *b, gb);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (node.value.shape[0], node.value.shape[1]);
                let mut ga = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        ga[j * r + i] = g[i * c + j];
                    }
                }
                self.accum(grads, *a, ga);
            }
            Op::Add(a, b, bc) => {
                self.binary_grad(grads, *a, *b, *bc, g, |gi, _, _| gi, |gi, _, _| gi);
            }
            Op::Sub(a, b, bc) => {
                self.binary_grad(grads, *a, *b, *bc, g, |gi, _, _| gi, |gi, _, _| -gi);
            }
            Op::Mul(a, b, bc) => {
                self.binary_grad(grads, *a, *b, *bc, g, |gi, _, y| gi * y, |gi, x, _| gi * x);
            }
            Op::Sin(a) => {
                let sign = if self.fault == Some(BackwardFault::SinSignFlip) { -1.0 } else { 1.0 };
                let x = &self.value(*a).data;
                let ga = g.iter().zip(x).map(|(gi, xi)| sign * gi * xi.cos()).collect();
                self.accum(grads, *a, ga);
            }
            Op::Cos(a) => {
                let x = &self.value(*a).data;
                let ga = g.iter().zip(x).map(|(gi, xi)| -gi * xi.sin()).collect();
                self.accum(grads, *a, ga);
            }
            Op::Relu(a) => {
                let x = &self.value(*a).data;
                let ga = g
                    .iter()
                    .zip(x)
                    .map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 })
                    .collect();
                self.accum(grads, *a, ga);
            }
            Op::Square(a) => {
                let x = &self.value(*a).data;
                let ga = g.iter().zip(x).map(|(gi, xi)| 2.0 * gi * xi).collect();
                self.accum(grads, *a, ga);
            }
            Op::Scale(a, f) => {
                let ga = g.iter().map(|gi| gi * f).collect();
                self.accum(grads, *a, ga);
            }
            Op::Sum(a, axis) => {
                let ga = expand(self.value(*a), *axis, g, 1.0);
                self.accum(grads, *a, ga);
            }
            Op::Mean(a, axis) => {
                let x = self.value(*a);
                let count = reduce_count(x, *axis).unwrap_or(1);
                let ga = expand(x, *axis, g, 1.0 / count as f64);
                self.accum(grads, *a, ga);
            }
            Op::Sparse(a, map) => {
                self.accum(grads, *a, map.apply_transpose(g));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn binary_grad(
        &self,
        grads: &mut [Option<Vec<f64>>],
        a: Var,
        b: Var,
        bc: Bcast,
        g: &[f64],
        da: impl Fn(f64, f64, f64) -> f64,
        db: impl Fn(f64, f64, f64) -> f64,
    ) {
        let (x, y) = (&self.value(a).data, &self.value(b).data);
        let (nx, ny) = (x.len(), y.len());
        let xa = |i: usize| if bc == Bcast::Lhs { x[i % nx] } else { x[i] };
        let yb = |i: usize| if bc == Bcast::Rhs { y[i % ny] } else { y[i] };
        if self.requires_grad(a) {
            let mut ga = vec![0.0; nx];
            for (i, &gi) in g.iter().enumerate() {
                let slot = if bc == Bcast::Lhs { i % nx } else { i };
                ga[slot] += da(gi, xa(i), yb(i));
            }
            self.accum(grads, a, ga);
        }
        if self.requires_grad(b) {
            let mut gb = vec![0.0; ny];
            for (i, &gi) in g.iter().enumerate() {
                let slot = if bc == Bcast::Rhs { i % ny } else { i };
                gb[slot] += db(gi, xa(i), yb(i));
            }
            self.accum(grads, b, gb);
        }
    }

    fn accum(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
        if !self.requires_grad(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }
}

fn broadcast_kind(a: &[usize], b: &[usize]) -> Result<Bcast> {
    if a == b {
        return Ok(Bcast::None);
    }
    let is_row = |s: &[usize]| matches!(s, [_] | [1, _]);
    let last = |s: &[usize]| *s.last().unwrap();
    if a.len() == 2 && is_row(b) && last(a) == last(b) {
        return Ok(Bcast::Rhs);
    }
    if b.len() == 2 && is_row(a) && last(a) == last(b) {
        return Ok(Bcast::Lhs);
    }
    Err(Error::dim(format!("cannot broadcast shapes {a:?} and {b:?}")))
}

/// (outer, axis length, inner) split of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn check_axis(x: &Tensor, axis: Option<usize>) -> Result<()> {
    match axis {
        Some(ax) if ax >= x.rank() => Err(Error::dim(format!(
            "axis {ax} out of range for rank {}",
            x.rank()
        ))),
        _ => Ok(()),
    }
}

fn reduce_count(x: &Tensor, axis: Option<usize>) -> Result<usize> {
    check_axis(x, axis)?;
    Ok(match axis {
        None => x.len(),
        Some(ax) => x.shape[ax],
    })
}

fn reduce(x: &Tensor, axis: Option<usize>) -> Result<Tensor> {
    check_axis(x, axis)?;
    let Some(ax) = axis else {
        return Ok(Tensor::scalar(x.data.iter().sum()));
    };
    let (outer, n, inner) = split_axis(&x.shape, ax);
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for k in 0..n {
            let base = (o * n + k) * inner;
            for i in 0..inner {
                out[o * inner + i] += x.data[base + i];
            }
        }
    }
    let mut shape: Vec<usize> = x.shape.clone();
    shape.remove(ax);
    if shape.is_empty() {
        shape.push(1);
    }
    Ok(Tensor { shape, data: out })
}

fn expand(x: &Tensor, axis: Option<usize>, g: &[f64], factor: f64) -> Vec<f64> {
    let Some(ax) = axis else {
        return vec![g[0] * factor; x.len()];
    };
    let (outer, n, inner) = split_axis(&x.shape, ax);
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for k in 0..n {
            let base = (o * n + k) * inner;
            for i in 0..inner {
                out[base + i] = g[o * inner + i] * factor;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn central_diff(f: impl Fn(&Tensor) -> f64, x: &Tensor, h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut p = x.clone();
                p.data_mut()[i] += h;
                let mut m = x.clone();
                m.data_mut()[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn max_rel(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = (x - y).abs();
                if d <= 1e-8 {
                    0.0
                } else {
                    d / x.abs().max(y.abs())
                }
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn matmul_identity_and_hand_product() {
        let mut t = Tape::new();
        let eye = t.constant(Tensor::matrix(2, 2, vec![1., 0., 0., 1.]).unwrap());
        let m = t.constant(Tensor::matrix(2, 2, vec![1., 2., 3., 4.]).unwrap());
        let p = t.matmul(eye, m).unwrap();
        assert_eq!(t.value(p).data(), &[1., 2., 3., 4.]);

        let a = t.constant(Tensor::matrix(1, 2, vec![1., 2.]).unwrap());
        let b = t.constant(Tensor::matrix(2, 1, vec![3., 4.]).unwrap());
        let p = t.matmul(a, b).unwrap();
        assert_eq!(t.value(p).data(), &[11.]);
        assert!(t.matmul(a, a).is_err());
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a0 = random(&mut rng, &[3, 3]);
        let b0 = random(&mut rng, &[3, 3]);
        let mut t = Tape::new();
        let a = t.param(a0.clone());
        let b = t.constant(b0.clone());
        let p = t.matmul(a, b).unwrap();
        let l = t.sum(p, None).unwrap();
        let g = t.backward(l).unwrap();
        let fd = central_diff(|x| x.matmul(&b0).unwrap().data().iter().sum(), &a0, 1e-6);
        assert!(max_rel(g.get(a).unwrap().data(), &fd) < 1e-5);
    }

    #[test]
    fn elementwise_values() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::zeros(&[4]));
        let s = t.sin(z);
        assert_eq!(t.value(s).data(), &[0.0; 4]);
        let x = t.constant(Tensor::vector(vec![-1.0, 2.0]));
        let r = t.relu(x);
        assert_eq!(t.value(r).data(), &[0.0, 2.0]);
    }

    #[test]
    fn mean_sin_squared_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x0 = random(&mut rng, &[16]);
        let f = |x: &Tensor| x.data().iter().map(|v| v.sin().powi(2)).sum::<f64>() / 16.0;
        let mut t = Tape::new();
        let x = t.param(x0.clone());
        let s = t.sin(x);
        let q = t.square(s);
        let l = t.mean(q, None).unwrap();
        assert!((t.value(l).item() - f(&x0)).abs() < 1e-15);
        let g = t.backward(l).unwrap();
        assert!(max_rel(g.get(x).unwrap().data(), &central_diff(f, &x0, 1e-6)) <= 1e-5);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![0.0, 1.0, -1.0]));
        let r = t.relu(x);
        let l = t.sum(r, None).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn reductions() {
        let mut t = Tape::new();
        let v = t.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let s = t.sum(v, None).unwrap();
        assert_eq!(t.value(s).item(), 6.0);
        let c = t.constant(Tensor::full(&[2, 3], 4.5));
        let m = t.mean(c, None).unwrap();
        assert_eq!(t.value(m).item(), 4.5);
        assert!(t.sum(c, Some(2)).is_err());

        let mx = t.mean(v, None).unwrap();
        let g = t.backward(mx).unwrap();
        assert_eq!(g.get(v).unwrap().data(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn axis_reductions_and_their_gradients() {
        let mut t = Tape::new();
        let x = t.param(Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let s0 = t.sum(x, Some(0)).unwrap();
        assert_eq!(t.value(s0).data(), &[5., 7., 9.]);
        let s1 = t.mean(x, Some(1)).unwrap();
        assert_eq!(t.value(s1).data(), &[2., 5.]);
        let w = t.constant(Tensor::vector(vec![1., 10.]));
        let weighted = t.mul(s1, w).unwrap();
        let l = t.sum(weighted, None).unwrap();
        let g = t.backward(l).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(
            g.get(x).unwrap().data(),
            &[third, third, third, 10.0 * third, 10.0 * third, 10.0 * third]
        );
    }

    #[test]
    fn identity_and_dot_gradients() {
        let mut t = Tape::new();
        let x = t.param(Tensor::scalar(2.5));
        let g = t.backward(x).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0]);

        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![1., 2., 3.]));
        let y = t.constant(Tensor::vector(vec![4., -5., 6.]));
        let p = t.mul(x, y).unwrap();
        let l = t.sum(p, None).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[4., -5., 6.]);
        assert!(g.get(y).is_none());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![1., 2.]));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn row_broadcast_gradients_reduce_over_rows() {
        let mut t = Tape::new();
        let m = t.param(Tensor::matrix(2, 2, vec![1., 2., 3., 4.]).unwrap());
        let r = t.param(Tensor::row(vec![10., 20.]));
        let p = t.mul(r, m).unwrap();
        assert_eq!(t.value(p).data(), &[10., 40., 30., 80.]);
        let l = t.sum(p, None).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(r).unwrap().data(), &[4., 6.]);
        assert_eq!(g.get(m).unwrap().data(), &[10., 20., 10., 20.]);

        let bad = t.constant(Tensor::row(vec![1., 2., 3.]));
        assert!(t.add(m, bad).is_err());
    }

    #[test]
    fn multiple_paths_are_summed() {
        let mut t = Tape::new();
        let x = t.param(Tensor::scalar(3.0));
        let a = t.square(x);
        let b = t.scale(x, 4.0);
        let l = t.add(a, b).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 10.0);
    }

    #[test]
    fn sparse_map_backward_is_transpose() {
        let s = Arc::new(SparseMatrix::from_triplets(1, 3, vec![(0, 0, 0.5), (0, 2, -2.0)]).unwrap());
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![1., 2., 3.]));
        let y = t.sparse_map(x, s).unwrap();
        assert_eq!(t.value(y).data(), &[-5.5]);
        let l = t.sum(y, None).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.5, 0.0, -2.0]);
    }

    #[test]
    fn gradients_are_linear_in_the_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = random(&mut rng, &[4, 3]);
        let w0 = random(&mut rng, &[3, 2]);
        let build = |alpha: f64, beta: f64| {
            let mut t = Tape::new();
            let x = t.param(x0.clone());
            let w = t.constant(w0.clone());
            let h = t.matmul(x, w).unwrap();
            let s = t.sin(h);
            let l1 = t.sum(s, None).unwrap();
            let q = t.square(x);
            let l2 = t.mean(q, None).unwrap();
            let a = t.scale(l1, alpha);
            let b = t.scale(l2, beta);
            let l = t.add(a, b).unwrap();
            t.backward(l).unwrap().take(x).unwrap().into_data()
        };
        let g1 = build(1.0, 0.0);
        let g2 = build(0.0, 1.0);
        let g = build(0.7, -1.3);
        for i in 0..g.len() {
            assert!((g[i] - (0.7 * g1[i] - 1.3 * g2[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn fault_injection_changes_sin_gradient() {
        let run = |fault: bool| {
            let mut t = Tape::new();
            if fault {
                t.inject_fault(BackwardFault::SinSignFlip);
            }
            let x = t.param(Tensor::scalar(0.3));
            let s = t.sin(x);
            t.backward(s).unwrap().take(x).unwrap().item()
        };
        assert_eq!(run(false), 0.3f64.cos());
        assert_eq!(run(true), -(0.3f64.cos()));
    }
}
