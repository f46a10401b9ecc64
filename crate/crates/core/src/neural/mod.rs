//! Dense multilayer perceptrons with optional batch normalization,
//! backpropagation, Adam and soft target updates.
//!
//! All trainable values of a network live in one flat `params` vector and
//! all batch-norm running statistics in one flat `stats` vector, so
//! optimizers, target blending and checkpoints work on plain slices.

mod adam;
mod batch;
mod checkpoint;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use batch::Batch;
pub use checkpoint::{decode_parameters, encode_parameters, CHECKPOINT_MAGIC};

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use batch::axpy;

/// Running-statistics momentum: `running = m * running + (1 - m) * batch`.
pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => elu(x),
            Activation::Tanh => libm::tanh(x),
            Activation::Linear => x,
        }
    }

    /// Derivative from the pre-activation `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x >= 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

/// `x` for `x >= 0`, `e^x - 1` otherwise.
#[inline]
pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        libm::expm1(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    pub batch_norm: bool,
    /// L2 weight regularization strength on this layer's weight matrix.
    pub l2: f64,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        LayerSpec { width, activation, batch_norm: false, l2: 0.0 }
    }

    pub fn with_batch_norm(mut self) -> Self {
        self.batch_norm = true;
        self
    }

    pub fn with_l2(mut self, l2: f64) -> Self {
        self.l2 = l2;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerLayout {
    fan_in: usize,
    width: usize,
    weights: usize,
    bias: usize,
    /// Offsets of scale and shift in `params`, running mean and variance in `stats`.
    bn: Option<(usize, usize, usize, usize)>,
}

fn layout(input_width: usize, specs: &[LayerSpec]) -> (Vec<LayerLayout>, usize, usize) {
    let mut out = Vec::with_capacity(specs.len());
    let mut p = 0;
    let mut s = 0;
    let mut fan_in = input_width;
    for spec in specs {
        let w = spec.width;
        let weights = p;
        p += w * fan_in;
        let bias = p;
        p += w;
        let bn = if spec.batch_norm {
            let g = p;
            let b = p + w;
            p += 2 * w;
            let m = s;
            let v = s + w;
            s += 2 * w;
            Some((g, b, m, v))
        } else {
            None
        };
        out.push(LayerLayout { fan_in, width: w, weights, bias, bn });
        fan_in = w;
    }
    (out, p, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics for batch norm; the pass is differentiable.
    Train,
    /// Running statistics for batch norm.
    Infer,
}

/// One network's weights plus batch-norm statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    input_width: usize,
    specs: Vec<LayerSpec>,
    layout: Vec<LayerLayout>,
    pub params: Vec<f64>,
    pub stats: Vec<f64>,
    version: u64,
}

impl ParameterSet {
    /// Zero weights and biases, identity batch norm.
    pub fn zeros(input_width: usize, specs: &[LayerSpec]) -> Result<Self> {
        if input_width == 0 || specs.is_empty() || specs.iter().any(|s| s.width == 0) {
            return Err(Error::Shape("layer widths must be at least 1".into()));
        }
        let (layout, np, ns) = layout(input_width, specs);
        let mut ps = ParameterSet {
            input_width,
            specs: specs.to_vec(),
            layout,
            params: vec![0.0; np],
            stats: vec![0.0; ns],
            version: 0,
        };
        for l in &ps.layout {
            if let Some((g, _, _, v)) = l.bn {
                ps.params[g..g + l.width].iter_mut().for_each(|x| *x = 1.0);
                ps.stats[v..v + l.width].iter_mut().for_each(|x| *x = 1.0);
            }
        }
        Ok(ps)
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.specs.last().map(|s| s.width).unwrap_or(0)
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn set_version(&mut self, v: u64) {
        self.version = v;
    }

    pub fn bump_version(&mut self) {
        self.version += 1;
    }

    fn has_batch_norm(&self) -> bool {
        self.specs.iter().any(|s| s.batch_norm)
    }

    /// Weight matrix of layer `layer`, row-major `width x fan_in`.
    pub fn weights(&self, layer: usize) -> &[f64] {
        let l = &self.layout[layer];
        &self.params[l.weights..l.weights + l.width * l.fan_in]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let l = self.layout[layer];
        &mut self.params[l.weights..l.weights + l.width * l.fan_in]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let l = &self.layout[layer];
        &self.params[l.bias..l.bias + l.width]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let l = self.layout[layer];
        &mut self.params[l.bias..l.bias + l.width]
    }

    /// Running mean and variance of a batch-norm layer.
    pub fn running_stats(&self, layer: usize) -> Option<(&[f64], &[f64])> {
        let l = &self.layout[layer];
        l.bn.map(|(_, _, m, v)| (&self.stats[m..m + l.width], &self.stats[v..v + l.width]))
    }

    pub fn same_shape(&self, other: &ParameterSet) -> bool {
        self.input_width == other.input_width && self.specs == other.specs
    }

    /// `Σ λ/2 ‖W‖²` over regularized layers.
    pub fn l2_penalty(&self) -> f64 {
        self.specs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.l2 > 0.0)
            .map(|(i, s)| 0.5 * s.l2 * self.weights(i).iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    /// Single-sample inference.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let (out, _) = self.forward(&Batch::row_vector(input), Mode::Infer)?;
        Ok(out.into_vec())
    }

    /// Forward pass. Never mutates; in train mode the batch statistics are
    /// returned in the cache (see [`ParameterSet::commit_stats`]).
    pub fn forward(&self, input: &Batch, mode: Mode) -> Result<(Batch, Cache)> {
        if input.cols() != self.input_width {
            return Err(Error::Shape(alloc::format!(
                "input width {} != network input {}",
                input.cols(),
                self.input_width
            )));
        }
        let n = input.rows();
        if mode == Mode::Train && self.has_batch_norm() && n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, have: n });
        }
        let mut layers = Vec::with_capacity(self.layout.len());
        let mut x = input.clone();
        for (li, l) in self.layout.iter().enumerate() {
            let spec = self.specs[li];
            let w = &self.params[l.weights..l.weights + l.width * l.fan_in];
            let b = &self.params[l.bias..l.bias + l.width];
            // z_i = b + sum_k x_ik W[:, k], with W transposed so each term is a contiguous axpy
            let mut wt = vec![0.0; l.width * l.fan_in];
            for j in 0..l.width {
                for k in 0..l.fan_in {
                    wt[k * l.width + j] = w[j * l.fan_in + k];
                }
            }
            let mut z = Batch::zeros(n, l.width);
            for i in 0..n {
                let xi = x.row(i);
                let zi = z.row_mut(i);
                zi.copy_from_slice(b);
                for (k, &xk) in xi.iter().enumerate() {
                    axpy(xk, &wt[k * l.width..(k + 1) * l.width], zi);
                }
            }
            let mut bn_cache = None;
            let u = match l.bn {
                None => z,
                Some((g, be, rm, rv)) => {
                    let gamma = &self.params[g..g + l.width];
                    let beta = &self.params[be..be + l.width];
                    let (mean, var) = match mode {
                        Mode::Train => batch_moments(&z),
                        Mode::Infer => (self.stats[rm..rm + l.width].to_vec(), self.stats[rv..rv + l.width].to_vec()),
                    };
                    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + BN_EPSILON)).collect();
                    let mut xhat = z.clone();
                    let mut u = Batch::zeros(n, l.width);
                    for i in 0..n {
                        let hi = xhat.row_mut(i);
                        for (j, h) in hi.iter_mut().enumerate() {
                            *h = (*h - mean[j]) * inv_std[j];
                        }
                        let ui = u.row_mut(i);
                        for (j, v) in ui.iter_mut().enumerate() {
                            *v = gamma[j] * hi[j] + beta[j];
                        }
                    }
                    bn_cache = Some(BnCache { xhat, inv_std, mean, var });
                    u
                }
            };
            let mut a = u.clone();
            a.as_mut_slice().iter_mut().for_each(|v| *v = spec.activation.apply(*v));
            layers.push(LayerCache { input: x, u, bn: bn_cache });
            if li + 1 == self.layout.len() {
                return Ok((a.clone(), Cache { version: self.version, mode, layers, output: a }));
            }
            x = a;
        }
        unreachable!("at least one layer")
    }

    /// Folds batch statistics from a train-mode cache into the running statistics.
    pub fn commit_stats(&mut self, cache: &Cache) -> Result<()> {
        if cache.mode != Mode::Train || cache.layers.len() != self.layout.len() {
            return Err(Error::StaleCache);
        }
        for (l, c) in self.layout.iter().zip(&cache.layers) {
            if let (Some((_, _, rm, rv)), Some(bn)) = (l.bn, &c.bn) {
                for j in 0..l.width {
                    self.stats[rm + j] = BN_MOMENTUM * self.stats[rm + j] + (1.0 - BN_MOMENTUM) * bn.mean[j];
                    self.stats[rv + j] = BN_MOMENTUM * self.stats[rv + j] + (1.0 - BN_MOMENTUM) * bn.var[j];
                }
            }
        }
        Ok(())
    }

    /// Train-mode forward that also updates the running statistics.
    pub fn forward_train(&mut self, input: &Batch) -> Result<(Batch, Cache)> {
        let (out, cache) = self.forward(input, Mode::Train)?;
        self.commit_stats(&cache)?;
        Ok((out, cache))
    }

    /// Gradients of the loss w.r.t. every parameter (L2 terms included) and
    /// w.r.t. the input batch. An infer-mode cache treats the running
    /// statistics as constants.
    pub fn backward(&self, cache: &Cache, grad_out: &Batch) -> Result<(Vec<f64>, Batch)> {
        if cache.version != self.version || cache.layers.len() != self.layout.len() {
            return Err(Error::StaleCache);
        }
        let n = cache.output.rows();
        if grad_out.rows() != n || grad_out.cols() != self.output_width() {
            return Err(Error::Shape("output gradient shape".into()));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut d_a = grad_out.clone();
        let mut next_out = &cache.output;
        for li in (0..self.layout.len()).rev() {
            let l = self.layout[li];
            let spec = self.specs[li];
            let c = &cache.layers[li];
            // through the activation
            let mut d_u = d_a;
            for (k, g) in d_u.as_mut_slice().iter_mut().enumerate() {
                *g *= spec.activation.derivative(c.u.as_slice()[k], next_out.as_slice()[k]);
            }
            // through batch norm
            let d_z = match (l.bn, &c.bn) {
                (Some((gi, bi, _, _)), Some(bn)) => {
                    let nf = n as f64;
                    let w = l.width;
                    let gamma = &self.params[gi..gi + w];
                    let mut d_gamma = vec![0.0; w];
                    let mut d_beta = vec![0.0; w];
                    for i in 0..n {
                        let (du, h) = (d_u.row(i), bn.xhat.row(i));
                        for j in 0..w {
                            d_gamma[j] += du[j] * h[j];
                            d_beta[j] += du[j];
                        }
                    }
                    for j in 0..w {
                        grads[gi + j] += d_gamma[j];
                        grads[bi + j] += d_beta[j];
                    }
                    let mut d_z = Batch::zeros(n, w);
                    for i in 0..n {
                        let (du, h, dz) = (d_u.row(i), bn.xhat.row(i), d_z.row_mut(i));
                        for j in 0..w {
                            let dh = du[j] * gamma[j];
                            dz[j] = match cache.mode {
                                // sum dh = gamma * d_beta, sum dh*h = gamma * d_gamma
                                Mode::Train => {
                                    bn.inv_std[j] / nf * (nf * dh - gamma[j] * d_beta[j] - h[j] * gamma[j] * d_gamma[j])
                                }
                                Mode::Infer => dh * bn.inv_std[j],
                            };
                        }
                    }
                    d_z
                }
                _ => d_u,
            };
            // through the affine map
            let w = &self.params[l.weights..l.weights + l.width * l.fan_in];
            let mut d_x = Batch::zeros(n, l.fan_in);
            {
                let (gw, rest) = grads[l.weights..].split_at_mut(l.width * l.fan_in);
                let gb = &mut rest[l.bias - l.weights - l.width * l.fan_in..][..l.width];
                for i in 0..n {
                    let xi = c.input.row(i);
                    let dzi = d_z.row(i);
                    let dxi = d_x.row_mut(i);
                    for j in 0..l.width {
                        let g = dzi[j];
                        if g == 0.0 {
                            continue;
                        }
                        gb[j] += g;
                        axpy(g, xi, &mut gw[j * l.fan_in..(j + 1) * l.fan_in]);
                        axpy(g, &w[j * l.fan_in..(j + 1) * l.fan_in], dxi);
                    }
                }
                if spec.l2 > 0.0 {
                    for (g, wv) in gw.iter_mut().zip(w) {
                        *g += spec.l2 * wv;
                    }
                }
            }
            next_out = &c.input;
            d_a = d_x;
        }
        Ok((grads, d_a))
    }
}

fn batch_moments(z: &Batch) -> (Vec<f64>, Vec<f64>) {
    let n = z.rows() as f64;
    let w = z.cols();
    let mut mean = vec![0.0; w];
    for i in 0..z.rows() {
        for (m, v) in mean.iter_mut().zip(z.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; w];
    for i in 0..z.rows() {
        for ((s, v), m) in var.iter_mut().zip(z.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Batch,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Batch,
    /// Pre-activation (after batch norm).
    u: Batch,
    bn: Option<BnCache>,
}

/// Activations retained by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    version: u64,
    mode: Mode,
    layers: Vec<LayerCache>,
    output: Batch,
}

impl Cache {
    pub fn output(&self) -> &Batch {
        &self.output
    }
}

/// He-normal weights `N(0, 2/fan_in)`, zero biases, identity batch norm.
pub fn he_init(specs: &[LayerSpec], input_width: usize, seed: u64) -> Result<ParameterSet> {
    let mut ps = ParameterSet::zeros(input_width, specs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for li in 0..ps.layout.len() {
        let fan_in = ps.layout[li].fan_in as f64;
        let normal = Normal::new(0.0, libm::sqrt(2.0 / fan_in)).expect("positive std");
        for w in ps.weights_mut(li) {
            *w = normal.sample(&mut rng);
        }
    }
    Ok(ps)
}

/// `target = (1 - tau) * target + tau * online`, running statistics included.
pub fn soft_update(target: &mut ParameterSet, online: &ParameterSet, tau: f64) -> Result<()> {
    if !target.same_shape(online) {
        return Err(Error::Shape("soft update between different architectures".into()));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(alloc::format!("tau {tau} outside [0, 1]")));
    }
    let keep = 1.0 - tau;
    for (t, o) in target.params.iter_mut().zip(&online.params) {
        *t = keep * *t + tau * o;
    }
    for (t, o) in target.stats.iter_mut().zip(&online.stats) {
        *t = keep * *t + tau * o;
    }
    target.version += 1;
    Ok(())
}

/// Overwrites `target` with `online`'s values, bumping `target`'s version.
pub fn hard_update(target: &mut ParameterSet, online: &ParameterSet) -> Result<()> {
    if !target.same_shape(online) {
        return Err(Error::Shape("hard update between different architectures".into()));
    }
    target.params.copy_from_slice(&online.params);
    target.stats.copy_from_slice(&online.stats);
    target.version += 1;
    Ok(())
}

#[cfg(test)]
mod tests;
