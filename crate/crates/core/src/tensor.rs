//! Dense multilayer classifier with hand-written reverse-mode gradients.
//!
//! Hidden layers apply the configured activation; the last layer is affine and
//! produces logits. Gradients for a loss on the logits are accumulated into a
//! [`GradientBuffer`] by [`backward`].

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_dim, Error, Result};
use crate::simplex::ProbVector;

/// Lower clamp on `p[label]` inside [`cross_entropy`].
pub const CE_PROB_FLOOR: f64 = 1e-30;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!("matrix shape {rows}x{cols}")));
        }
        ensure_same_dim(rows * cols, data.len())?;
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().zip(x).map(|(w, xi)| w * xi).sum()).collect()
    }

    fn mat_t_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
        out
    }
}

fn check_finite(xs: &[f64]) -> Result<()> {
    match xs.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index, value: xs[index] }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Self::Relu),
            "tanh" => Ok(Self::Tanh),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

/// One affine layer: `y = W x + b` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Classifier parameters θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    layers: Vec<Layer>,
    activation: Activation,
}

impl NetworkParams {
    pub fn new(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("layer list"));
        }
        for (k, layer) in layers.iter().enumerate() {
            ensure_same_dim(layer.weight.rows, layer.bias.len())?;
            check_finite(&layer.bias)?;
            if k > 0 {
                ensure_same_dim(layers[k - 1].weight.rows, layer.weight.cols)?;
            }
        }
        if layers.last().unwrap().weight.rows < 2 {
            return Err(Error::InvalidArgument("classifier needs at least 2 outputs".into()));
        }
        Ok(Self { layers, activation })
    }

    /// Scaled-uniform init: weights in `±√(6/(fan_in+fan_out))`, zero biases.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        num_classes: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(num_classes);
        if sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
                Layer { weight: Matrix { rows: fan_out, cols: fan_in, data }, bias: vec![0.0; fan_out] }
            })
            .collect();
        Self::new(layers, activation)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().unwrap().weight.rows
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.data.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer, weights then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weight.data);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        ensure_same_dim(self.num_params(), flat.len())?;
        let mut i = 0;
        for l in &mut self.layers {
            let n = l.weight.data.len();
            l.weight.data.copy_from_slice(&flat[i..i + n]);
            i += n;
            let n = l.bias.len();
            l.bias.copy_from_slice(&flat[i..i + n]);
            i += n;
        }
        Ok(())
    }

    /// Plain SGD step `θ ← θ − lr·g`.
    pub fn sgd_step(&mut self, grads: &GradientBuffer, lr: f64) -> Result<()> {
        grads.check_congruent(self)?;
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, gw) in l.weight.data.iter_mut().zip(&g.weight.data) {
                *w -= lr * gw;
            }
            for (b, gb) in l.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
        Ok(())
    }
}

/// ∂L/∂θ, shape-congruent with a [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    layers: Vec<Layer>,
}

impl GradientBuffer {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| Layer { weight: Matrix::zeros(l.weight.rows, l.weight.cols), bias: vec![0.0; l.bias.len()] })
            .collect();
        Self { layers }
    }

    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.weight.data.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.data.iter_mut().for_each(|v| *v *= factor);
            l.bias.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += other`, entrywise in fixed order.
    pub fn accumulate(&mut self, other: &GradientBuffer) -> Result<()> {
        ensure_same_dim(self.layers.len(), other.layers.len())?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            ensure_same_dim(a.weight.data.len(), b.weight.data.len())?;
            a.weight.data.iter_mut().zip(&b.weight.data).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.data.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weight.data);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    fn check_congruent(&self, params: &NetworkParams) -> Result<()> {
        ensure_same_dim(params.layers.len(), self.layers.len())?;
        for (p, g) in params.layers.iter().zip(&self.layers) {
            ensure_same_dim(p.weight.rows, g.weight.rows)?;
            ensure_same_dim(p.weight.cols, g.weight.cols)?;
        }
        Ok(())
    }
}

/// Intermediates from [`forward`] needed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    // inputs[k] is the input to layer k; pre[k] the pre-activation of hidden layer k.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

/// Evaluate the network, returning logits and the activation record.
pub fn forward(params: &NetworkParams, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    ensure_same_dim(params.input_dim(), x.len())?;
    check_finite(x)?;
    let last = params.layers.len() - 1;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut pre = Vec::with_capacity(last);
    let mut a = x.to_vec();
    for (k, layer) in params.layers.iter().enumerate() {
        let mut z = layer.weight.mat_vec(&a);
        z.iter_mut().zip(&layer.bias).for_each(|(zi, b)| *zi += b);
        check_finite(&z)?;
        inputs.push(a);
        if k == last {
            return Ok((z, ForwardCache { inputs, pre }));
        }
        a = z.iter().map(|&v| params.activation.apply(v)).collect();
        pre.push(z);
    }
    unreachable!("network has at least one layer")
}

/// Accumulate `∂L/∂θ` into `grads` given `output_grad = ∂L/∂logits`.
pub fn backward(
    params: &NetworkParams,
    cache: &ForwardCache,
    output_grad: &[f64],
    grads: &mut GradientBuffer,
) -> Result<()> {
    grads.check_congruent(params)?;
    ensure_same_dim(params.num_classes(), output_grad.len())?;
    ensure_same_dim(params.layers.len(), cache.inputs.len())?;
    let mut delta = output_grad.to_vec();
    for k in (0..params.layers.len()).rev() {
        let input = &cache.inputs[k];
        ensure_same_dim(params.layers[k].weight.cols, input.len())?;
        let g = &mut grads.layers[k];
        for (r, &dr) in delta.iter().enumerate() {
            if dr == 0.0 {
                continue;
            }
            let row = &mut g.weight.data[r * input.len()..(r + 1) * input.len()];
            row.iter_mut().zip(input).for_each(|(w, xi)| *w += dr * xi);
            g.bias[r] += dr;
        }
        if k > 0 {
            let upstream = params.layers[k].weight.mat_t_vec(&delta);
            let z = &cache.pre[k - 1];
            delta = upstream
                .iter()
                .zip(z.iter().zip(input))
                .map(|(u, (&zi, &ai))| u * params.activation.derivative(zi, ai))
                .collect();
        }
    }
    Ok(())
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(Error::Empty("logit vector"));
    }
    if logits.len() < 2 {
        return Err(Error::InvalidArgument("softmax needs at least 2 logits".into()));
    }
    check_finite(logits)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter_mut().for_each(|e| *e /= total);
    Ok(ProbVector::from_vec_unchecked(exps))
}

/// Chain `∂L/∂p` through softmax: `∂L/∂z_i = p_i (g_i − Σ_j p_j g_j)`.
pub fn softmax_backward(p: &ProbVector, grad_p: &[f64]) -> Result<Vec<f64>> {
    ensure_same_dim(p.dim(), grad_p.len())?;
    let probs = p.as_slice();
    let dot: f64 = probs.iter().zip(grad_p).map(|(a, b)| a * b).sum();
    Ok(probs.iter().zip(grad_p).map(|(pi, gi)| pi * (gi - dot)).collect())
}

fn check_label(label: usize, num_classes: usize) -> Result<()> {
    if label >= num_classes {
        return Err(Error::LabelOutOfRange { label, num_classes });
    }
    Ok(())
}

/// `−log p[label]`, with `p[label]` clamped at [`CE_PROB_FLOOR`].
pub fn cross_entropy(p: &ProbVector, label: usize) -> Result<f64> {
    check_label(label, p.dim())?;
    Ok(-p.as_slice()[label].max(CE_PROB_FLOOR).ln())
}

/// Gradient of softmax cross-entropy with respect to the logits, `p − e_label`.
pub fn cross_entropy_logit_grad(p: &ProbVector, label: usize) -> Result<Vec<f64>> {
    check_label(label, p.dim())?;
    let mut g = p.as_slice().to_vec();
    g[label] -= 1.0;
    Ok(g)
}
