//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every primitive evaluates eagerly, appends a node holding its output and
//! the context its backward pass needs, and returns a [`Var`] handle. Nodes
//! are appended in evaluation order, so the node list is already a
//! topological order and [`Tape::backward`] is a single reverse sweep.

use std::fmt;
use std::sync::Arc;

use crate::error::{shape_err, NeuralError, Result};
use crate::kernels::conv::{self, ConvGeom};
use crate::kernels::resample::{self, UpsampleMode};
use crate::kernels::{filter, norm, tv};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A fixed linear map registered as a differentiable primitive.
///
/// Backward applies [`LinearMap::adjoint`] to the upstream gradient, which is
/// the exact gradient only if `adjoint` is the true transpose of `apply`.
pub trait LinearMap<T>: Send + Sync {
    fn input_shape(&self) -> Vec<usize>;
    fn output_shape(&self) -> Vec<usize>;
    fn apply(&self, x: &[T], out: &mut [T]);
    fn adjoint(&self, y: &[T], out: &mut [T]);
}

enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        batch: usize,
        cols: Vec<T>,
    },
    ChannelNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    LeakyRelu {
        x: Var,
        slope: T,
    },
    Sigmoid(Var),
    Upsample2x {
        x: Var,
        mode: UpsampleMode,
    },
    Concat(Vec<Var>),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Square(Var),
    Sqrt(Var),
    Scale(Var, T),
    Offset(Var),
    Sum(Var),
    Mean(Var),
    GaussianValid {
        x: Var,
        kernel: Vec<T>,
    },
    TotalVariation {
        x: Var,
        eps: T,
    },
    Linear {
        x: Var,
        map: Arc<dyn LinearMap<T>>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::ChannelNorm { .. } => "channel_norm",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Upsample2x { .. } => "upsample2x",
            Op::Concat(_) => "concat",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Square(_) => "square",
            Op::Sqrt(_) => "sqrt",
            Op::Scale(..) => "scale",
            Op::Offset(_) => "offset",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::GaussianValid { .. } => "gaussian_valid",
            Op::TotalVariation { .. } => "total_variation",
            Op::Linear { .. } => "linear",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recorded computation graph for one forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ops: Vec<_> = self.nodes.iter().map(|n| n.op.name()).collect();
        f.debug_struct("Tape").field("ops", &ops).finish()
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every differentiable leaf.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for `v`; zeros when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Tensor<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    /// Moves out the gradients of `vars` in order.
    pub fn take_all(&mut self, vars: &[Var]) -> Vec<Tensor<T>> {
        vars.iter()
            .map(|v| {
                self.grads[v.0]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
            })
            .collect()
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(shape_err(op, format!("{a:?} vs {b:?}")))
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf (a parameter or an input we want gradients for).
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    fn unary(&mut self, x: Var, value: Tensor<T>, op: Op<T>) -> Var {
        let rg = self.requires_grad(x);
        self.push(value, op, rg)
    }

    /// 2-d convolution of an NCHW tensor with an `[c_out, c_in, k, k]` kernel.
    ///
    /// Stride 1 uses `k / 2` reflection padding so spatial size is preserved;
    /// stride 2 uses the same padding and halves even sizes.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let (batch, c_in, h, wd) = self.value(x).nchw("conv2d")?;
        let (c_out, k) = match *self.shape(w) {
            [co, ci, kh, kw] if ci == c_in && kh == kw && kh % 2 == 1 => (co, kh),
            _ => {
                return Err(shape_err(
                    "conv2d",
                    format!("kernel {:?} for input {:?}", self.shape(w), self.shape(x)),
                ))
            }
        };
        if let Some(b) = b {
            same_shape("conv2d bias", self.shape(b), &[c_out])?;
        }
        if stride == 0 || stride > 2 {
            return Err(shape_err("conv2d", format!("unsupported stride {stride}")));
        }
        let pad = k / 2;
        if pad > 0 && (h <= pad || wd <= pad) {
            return Err(shape_err("conv2d", format!("{h}x{wd} too small to reflect-pad by {pad}")));
        }
        let geom = ConvGeom {
            c_in,
            c_out,
            h,
            w: wd,
            k,
            stride,
            pad,
        };
        let out_shape = [batch, c_out, geom.h_out(), geom.w_out()];
        let mut out = Tensor::zeros(&out_shape);
        let cols = conv::forward(
            &geom,
            batch,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            out.data_mut(),
        );
        let rg = self.requires_grad(x) || self.requires_grad(w) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(out, Op::Conv2d { x, w, b, geom, batch, cols }, rg))
    }

    /// Normalises each channel of each sample over its spatial extent, then
    /// applies per-channel `gamma * x + beta`.
    pub fn channel_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (n, c, h, w) = self.value(x).nchw("channel_norm")?;
        same_shape("channel_norm gamma", self.shape(gamma), &[c])?;
        same_shape("channel_norm beta", self.shape(beta), &[c])?;
        let mut out = Tensor::zeros(self.shape(x));
        let (xhat, inv_std) = norm::forward(
            n * c,
            c,
            h * w,
            self.value(x).data(),
            self.value(gamma).data(),
            self.value(beta).data(),
            T::from_f64(eps),
            out.data_mut(),
        );
        let rg = self.requires_grad(x) || self.requires_grad(gamma) || self.requires_grad(beta);
        Ok(self.push(
            out,
            Op::ChannelNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = T::from_f64(slope);
        let out = self.value(x).map(|v| if v > T::ZERO { v } else { s * v });
        self.unary(x, out, Op::LeakyRelu { x, slope: s })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| T::ONE / (T::ONE + (-v).exp()));
        self.unary(x, out, Op::Sigmoid(x))
    }

    pub fn upsample2x(&mut self, x: Var, mode: UpsampleMode) -> Result<Var> {
        let (n, c, h, w) = self.value(x).nchw("upsample2x")?;
        let mut out = Tensor::zeros(&[n, c, 2 * h, 2 * w]);
        resample::forward(mode, n * c, h, w, self.value(x).data(), out.data_mut());
        Ok(self.unary(x, out, Op::Upsample2x { x, mode }))
    }

    /// Concatenates NCHW tensors along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| shape_err("concat", "no inputs"))?;
        let (n, _, h, w) = self.value(first).nchw("concat")?;
        let mut channels = 0;
        for &p in parts {
            let (pn, pc, ph, pw) = self.value(p).nchw("concat")?;
            if (pn, ph, pw) != (n, h, w) {
                return Err(shape_err(
                    "concat",
                    format!("{:?} vs {:?}", self.shape(p), self.shape(first)),
                ));
            }
            channels += pc;
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * channels * plane);
        for b in 0..n {
            for &p in parts {
                let pc = self.shape(p)[1];
                data.extend_from_slice(&self.value(p).data()[b * pc * plane..(b + 1) * pc * plane]);
            }
        }
        let out = Tensor::new(&[n, channels, h, w], data)?;
        let rg = parts.iter().any(|&p| self.requires_grad(p));
        Ok(self.push(out, Op::Concat(parts.to_vec()), rg))
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        same_shape(name, self.shape(a), self.shape(b))?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::new(self.shape(a), data)?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        self.unary(x, out, Op::Square(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.sqrt());
        self.unary(x, out, Op::Sqrt(x))
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = T::from_f64(c);
        let out = self.value(x).map(|v| v * c);
        self.unary(x, out, Op::Scale(x, c))
    }

    /// Adds a constant.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let c = T::from_f64(c);
        let out = self.value(x).map(|v| v + c);
        self.unary(x, out, Op::Offset(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.unary(x, out, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = T::from_f64(self.value(x).len() as f64);
        let out = Tensor::scalar(self.value(x).sum() / n);
        self.unary(x, out, Op::Mean(x))
    }

    /// Separable "valid" filtering of every plane with `kernel ⊗ kernel`.
    pub fn gaussian_valid(&mut self, x: Var, kernel: &[f64]) -> Result<Var> {
        let (n, c, h, w) = self.value(x).nchw("gaussian_valid")?;
        let k = kernel.len();
        if k == 0 || h < k || w < k {
            return Err(shape_err("gaussian_valid", format!("{h}x{w} smaller than window {k}")));
        }
        let kernel: Vec<T> = kernel.iter().map(|&v| T::from_f64(v)).collect();
        let mut out = Tensor::zeros(&[n, c, h + 1 - k, w + 1 - k]);
        filter::forward(n * c, h, w, &kernel, self.value(x).data(), out.data_mut());
        Ok(self.unary(x, out, Op::GaussianValid { x, kernel }))
    }

    /// Mean over pixels of the smoothed isotropic gradient magnitude, averaged
    /// between forward and backward differences.
    pub fn total_variation(&mut self, x: Var, eps: f64) -> Result<Var> {
        let (n, c, h, w) = self.value(x).nchw("total_variation")?;
        if h < 2 || w < 2 {
            return Err(shape_err("total_variation", format!("{h}x{w} below 2x2")));
        }
        let eps = T::from_f64(eps);
        let plane = h * w;
        let data = self.value(x).data();
        let total: T = (0..n * c)
            .map(|p| tv::plane_sum(h, w, &data[p * plane..(p + 1) * plane], eps))
            .sum();
        let out = Tensor::scalar(total / T::from_f64((2 * n * c * plane) as f64));
        Ok(self.unary(x, out, Op::TotalVariation { x, eps }))
    }

    /// Applies a fixed linear map; backward uses its adjoint.
    pub fn linear(&mut self, x: Var, map: Arc<dyn LinearMap<T>>) -> Result<Var> {
        same_shape("linear", self.shape(x), &map.input_shape())?;
        let mut out = Tensor::zeros(&map.output_shape());
        map.apply(self.value(x).data(), out.data_mut());
        Ok(self.unary(x, out, Op::Linear { x, map }))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.len() != 1 {
            return Err(NeuralError::NonScalarLoss(loss_node.value.shape().to_vec()));
        }
        let shapes: Vec<Vec<usize>> = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if loss_node.requires_grad {
            grads[loss.0] = Some(Tensor::full(loss_node.value.shape(), T::ONE));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !matches!(n.op, Op::Leaf) || !n.requires_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    /// Zero-initialised gradient buffer for `v`, or `None` if `v` is constant.
    fn slot<'a>(&self, grads: &'a mut [Option<Tensor<T>>], v: Var) -> Option<&'a mut Tensor<T>> {
        if !self.requires_grad(v) {
            return None;
        }
        let shape = self.shape(v);
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(shape)))
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: impl Fn(usize) -> T) {
        if let Some(s) = self.slot(grads, v) {
            for (i, d) in s.data_mut().iter_mut().enumerate() {
                *d += g(i);
            }
        }
    }

    fn backward_node(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                batch,
                cols,
            } => {
                let mut dx = self.slot(grads, *x).map(|t| t.take_data());
                let mut dw = self.slot(grads, *w).map(|t| t.take_data());
                let mut db = b.and_then(|b| self.slot(grads, b)).map(|t| t.take_data());
                conv::backward(
                    geom,
                    *batch,
                    self.value(*x).data(),
                    cols,
                    self.value(*w).data(),
                    gd,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                self.restore(grads, *x, dx);
                self.restore(grads, *w, dw);
                if let Some(b) = b {
                    self.restore(grads, *b, db);
                }
            }
            Op::ChannelNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = self.shape(*gamma)[0];
                let s = self.shape(*x);
                let plane = s[2] * s[3];
                let mut dx = self.slot(grads, *x).map(|t| t.take_data());
                let mut dg = self.slot(grads, *gamma).map(|t| t.take_data());
                let mut dbeta = self.slot(grads, *beta).map(|t| t.take_data());
                norm::backward(
                    c,
                    plane,
                    xhat,
                    inv_std,
                    self.value(*gamma).data(),
                    gd,
                    dx.as_deref_mut(),
                    dg.as_deref_mut(),
                    dbeta.as_deref_mut(),
                );
                self.restore(grads, *x, dx);
                self.restore(grads, *gamma, dg);
                self.restore(grads, *beta, dbeta);
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x).data();
                self.accumulate(grads, *x, |i| if xv[i] > T::ZERO { gd[i] } else { *slope * gd[i] });
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                self.accumulate(grads, *x, |i| gd[i] * y[i] * (T::ONE - y[i]));
            }
            Op::Upsample2x { x, mode } => {
                let s = self.shape(*x).to_vec();
                if let Some(dx) = self.slot(grads, *x) {
                    resample::backward(*mode, s[0] * s[1], s[2], s[3], gd, dx.data_mut());
                }
            }
            Op::Concat(parts) => {
                let s = node.value.shape();
                let (n, total, plane) = (s[0], s[1], s[2] * s[3]);
                let mut offset = 0;
                for &p in parts {
                    let pc = self.shape(p)[1];
                    if let Some(dp) = self.slot(grads, p) {
                        let d = dp.data_mut();
                        for b in 0..n {
                            let src = &gd[(b * total + offset) * plane..(b * total + offset + pc) * plane];
                            for (dv, &sv) in d[b * pc * plane..(b + 1) * pc * plane].iter_mut().zip(src) {
                                *dv += sv;
                            }
                        }
                    }
                    offset += pc;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |i| gd[i]);
                self.accumulate(grads, *b, |i| gd[i]);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |i| gd[i]);
                self.accumulate(grads, *b, |i| -gd[i]);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |i| gd[i] * bv[i]);
                self.accumulate(grads, *b, |i| gd[i] * av[i]);
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |i| gd[i] / bv[i]);
                self.accumulate(grads, *b, |i| -gd[i] * av[i] / (bv[i] * bv[i]));
            }
            Op::Square(x) => {
                let xv = self.value(*x).data();
                let two = T::from_f64(2.0);
                self.accumulate(grads, *x, |i| two * xv[i] * gd[i]);
            }
            Op::Sqrt(x) => {
                let y = node.value.data();
                let half = T::from_f64(0.5);
                self.accumulate(grads, *x, |i| half * gd[i] / y[i]);
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, |i| *c * gd[i]),
            Op::Offset(x) => self.accumulate(grads, *x, |i| gd[i]),
            Op::Sum(x) => self.accumulate(grads, *x, |_| gd[0]),
            Op::Mean(x) => {
                let n = T::from_f64(self.value(*x).len() as f64);
                let v = gd[0] / n;
                self.accumulate(grads, *x, |_| v);
            }
            Op::GaussianValid { x, kernel } => {
                let s = self.shape(*x).to_vec();
                if let Some(dx) = self.slot(grads, *x) {
                    filter::backward(s[0] * s[1], s[2], s[3], kernel, gd, dx.data_mut());
                }
            }
            Op::TotalVariation { x, eps } => {
                let s = self.shape(*x).to_vec();
                let plane = s[2] * s[3];
                let scale = gd[0] / T::from_f64((2 * s[0] * s[1] * plane) as f64);
                let xv = self.value(*x).data();
                if let Some(dx) = self.slot(grads, *x) {
                    let d = dx.data_mut();
                    for p in 0..s[0] * s[1] {
                        let r = p * plane..(p + 1) * plane;
                        tv::plane_grad(s[2], s[3], &xv[r.clone()], *eps, scale, &mut d[r]);
                    }
                }
            }
            Op::Linear { x, map } => {
                if let Some(dx) = self.slot(grads, *x) {
                    let mut tmp = vec![T::ZERO; dx.len()];
                    map.adjoint(gd, &mut tmp);
                    dx.accumulate(&tmp);
                }
            }
        }
    }

    fn restore(&self, grads: &mut [Option<Tensor<T>>], v: Var, data: Option<Vec<T>>) {
        if let (Some(data), Some(slot)) = (data, grads[v.0].as_mut()) {
            slot.set_data(data);
        }
    }
}
