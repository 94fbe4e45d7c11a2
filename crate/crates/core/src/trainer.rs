//! Minimal backprop trainer with masked updates.
//!
//! Forward and backward passes are generic over the float type: training runs
//! in `f32`, the gradient check in `f64` so that central differences are not
//! swamped by rounding noise.

use std::ops::AddAssign;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::Dataset;
use crate::dense::evaluate;
use crate::error::{Error, Result};
use crate::model::{ActShape, LayerSpec, ModelGraph};
use crate::parallel::Execution;
use crate::tensor::TensorF32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Adam,
            learning_rate: 2e-3,
            epochs: 4,
            batch_size: 64,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Kept positions per parametric layer (`true` = kept).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    layers: Vec<Vec<bool>>,
}

impl PruneMask {
    pub fn from_layers(layers: Vec<Vec<bool>>) -> Self {
        Self { layers }
    }

    /// Everything kept.
    pub fn full(model: &ModelGraph) -> Self {
        Self {
            layers: model.weights().iter().map(|w| vec![true; w.len()]).collect(),
        }
    }

    /// Kept where the weight is nonzero.
    pub fn from_nonzeros(model: &ModelGraph) -> Self {
        Self {
            layers: model
                .weights()
                .iter()
                .map(|w| w.data().iter().map(|&v| v != 0.0).collect())
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Vec<bool>] {
        &self.layers
    }

    pub fn kept(&self) -> usize {
        self.layers.iter().flatten().filter(|&&k| k).count()
    }

    pub fn total(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn sparsity(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            1.0 - self.kept() as f64 / total as f64
        }
    }

    pub fn layer_sparsity(&self, layer: usize) -> f64 {
        let l = &self.layers[layer];
        1.0 - l.iter().filter(|&&k| k).count() as f64 / l.len() as f64
    }

    /// Zeroes every masked-out weight of `model`.
    pub fn apply(&self, model: &mut ModelGraph) {
        for (w, keep) in model.weights_mut().iter_mut().zip(&self.layers) {
            for (v, &k) in w.data_mut().iter_mut().zip(keep) {
                if !k {
                    *v = 0.0;
                }
            }
        }
    }
}

/// Uniform(-k, k) initialisation with k = 1/sqrt(fan_in), for weights and biases.
pub fn init_model(input_shape: [usize; 3], layers: Vec<LayerSpec>, seed: u64) -> Result<ModelGraph> {
    let mut model = ModelGraph::zeros(input_shape, layers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fan_ins: Vec<usize> = model
        .layers()
        .iter()
        .filter(|l| l.is_parametric())
        .map(LayerSpec::fan_in)
        .collect();
    for (k, fan_in) in fan_ins.into_iter().enumerate() {
        let bound = 1.0 / (fan_in as f32).sqrt();
        for v in model.weights_mut()[k].data_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        for v in &mut model.biases_mut()[k] {
            *v = rng.gen_range(-bound..bound);
        }
    }
    Ok(model)
}

/// Parameters of every parametric layer in a chosen float type.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Params<F> {
    pub weights: Vec<Vec<F>>,
    pub biases: Vec<Vec<F>>,
}

impl<F: Float> Params<F> {
    fn from_model(model: &ModelGraph) -> Self {
        let cast = |v: &f32| F::from(*v).expect("f32 fits");
        Self {
            weights: model.weights().iter().map(|w| w.data().iter().map(cast).collect()).collect(),
            biases: model.biases().iter().map(|b| b.iter().map(cast).collect()).collect(),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| vec![F::zero(); w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![F::zero(); b.len()]).collect(),
        }
    }

    fn fill_zero(&mut self) {
        self.weights.iter_mut().flatten().for_each(|v| *v = F::zero());
        self.biases.iter_mut().flatten().for_each(|v| *v = F::zero());
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.all_mut().zip(other.all()) {
            *a = *a + *b;
        }
    }

    fn all(&self) -> impl Iterator<Item = &F> {
        self.weights.iter().flatten().chain(self.biases.iter().flatten())
    }

    fn all_mut(&mut self) -> impl Iterator<Item = &mut F> {
        self.weights.iter_mut().flatten().chain(self.biases.iter_mut().flatten())
    }

    fn len(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// The `k`-th scalar in `all()` order.
    fn at_mut(&mut self, mut k: usize) -> &mut F {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            if k < v.len() {
                return &mut v[k];
            }
            k -= v.len();
        }
        panic!("parameter index out of range")
    }
}

impl Params<f32> {
    fn write_back(&self, model: &mut ModelGraph) {
        for (dst, src) in model.weights_mut().iter_mut().zip(&self.weights) {
            dst.data_mut().copy_from_slice(src);
        }
        for (dst, src) in model.biases_mut().iter_mut().zip(&self.biases) {
            dst.copy_from_slice(src);
        }
    }
}

/// Activations and pooling routes recorded by the forward pass.
struct Cache<F> {
    acts: Vec<Vec<F>>,
    pool_routes: Vec<Vec<usize>>,
}

struct Net<'a> {
    layers: &'a [LayerSpec],
    shapes: Vec<ActShape>,
}

impl<'a> Net<'a> {
    fn new(model: &'a ModelGraph) -> Self {
        Self {
            layers: model.layers(),
            shapes: model.shapes(),
        }
    }

    fn new_cache<F: Float>(&self) -> Cache<F> {
        Cache {
            acts: self.shapes.iter().map(|s| vec![F::zero(); s.numel()]).collect(),
            pool_routes: self
                .shapes
                .iter()
                .skip(1)
                .map(|s| vec![0; s.numel()])
                .collect(),
        }
    }

    fn forward<F: Float + AddAssign>(&self, params: &Params<F>, input: &[F], cache: &mut Cache<F>) {
        cache.acts[0].copy_from_slice(input);
        let mut p = 0;
        for (li, spec) in self.layers.iter().enumerate() {
            let (head, tail) = cache.acts.split_at_mut(li + 1);
            let x = &head[li];
            let y = &mut tail[0];
            let (ins, outs) = (self.shapes[li], self.shapes[li + 1]);
            match *spec {
                LayerSpec::Conv2d { stride, padding, .. } => {
                    let (w, b) = (&params.weights[p], &params.biases[p]);
                    p += 1;
                    let (ic, ih, iw) = ins.spatial().expect("spatial");
                    let (oc, oh, ow) = outs.spatial().expect("spatial");
                    let (kh, kw) = kernel_dims(spec);
                    for o in 0..oc {
                        for r in 0..oh {
                            for c in 0..ow {
                                let mut sum = F::zero();
                                for i in 0..ic {
                                    for a in 0..kh {
                                        let Some(y_in) = tap(r, a, stride, padding, ih) else { continue };
                                        for bb in 0..kw {
                                            let Some(x_in) = tap(c, bb, stride, padding, iw) else { continue };
                                            sum += w[((o * ic + i) * kh + a) * kw + bb] * x[(i * ih + y_in) * iw + x_in];
                                        }
                                    }
                                }
                                y[(o * oh + r) * ow + c] = sum + b[o];
                            }
                        }
                    }
                }
                LayerSpec::Linear { in_features, .. } => {
                    let (w, b) = (&params.weights[p], &params.biases[p]);
                    p += 1;
                    for (i, out) in y.iter_mut().enumerate() {
                        let row = &w[i * in_features..(i + 1) * in_features];
                        let mut sum = F::zero();
                        for (wv, xv) in row.iter().zip(x.iter()) {
                            sum += *wv * *xv;
                        }
                        *out = sum + b[i];
                    }
                }
                LayerSpec::MaxPool2d { kernel, stride } => {
                    let (ch, h, w) = ins.spatial().expect("spatial");
                    let (_, oh, ow) = outs.spatial().expect("spatial");
                    let routes = &mut cache.pool_routes[li];
                    for c in 0..ch {
                        for r in 0..oh {
                            for col in 0..ow {
                                let mut best_idx = (c * h + r * stride) * w + col * stride;
                                for a in 0..kernel {
                                    for bb in 0..kernel {
                                        let idx = (c * h + r * stride + a) * w + col * stride + bb;
                                        // strict comparison keeps the first maximum in row-major order
                                        if x[idx] > x[best_idx] {
                                            best_idx = idx;
                                        }
                                    }
                                }
                                let o = (c * oh + r) * ow + col;
                                y[o] = x[best_idx];
                                routes[o] = best_idx;
                            }
                        }
                    }
                }
                LayerSpec::Relu => {
                    for (o, &v) in y.iter_mut().zip(x.iter()) {
                        *o = if v > F::zero() { v } else { F::zero() };
                    }
                }
                LayerSpec::Flatten => y.copy_from_slice(x),
            }
        }
    }

    /// Accumulates parameter gradients for one sample into `grads`, given dL/dlogits.
    fn backward<F: Float + AddAssign>(
        &self,
        params: &Params<F>,
        cache: &Cache<F>,
        dlogits: &[F],
        grads: &mut Params<F>,
    ) {
        let mut dy = dlogits.to_vec();
        let mut p = params.weights.len();
        for (li, spec) in self.layers.iter().enumerate().rev() {
            let x = &cache.acts[li];
            let (ins, outs) = (self.shapes[li], self.shapes[li + 1]);
            let need_dx = li > 0;
            let mut dx = vec![F::zero(); ins.numel()];
            match *spec {
                LayerSpec::Conv2d { stride, padding, .. } => {
                    p -= 1;
                    let w = &params.weights[p];
                    let (gw, gb) = (&mut grads.weights[p], &mut grads.biases[p]);
                    let (ic, ih, iw) = ins.spatial().expect("spatial");
                    let (oc, oh, ow) = outs.spatial().expect("spatial");
                    let (kh, kw) = kernel_dims(spec);
                    for o in 0..oc {
                        for r in 0..oh {
                            for c in 0..ow {
                                let g = dy[(o * oh + r) * ow + c];
                                if g == F::zero() {
                                    continue;
                                }
                                gb[o] += g;
                                for i in 0..ic {
                                    for a in 0..kh {
                                        let Some(y_in) = tap(r, a, stride, padding, ih) else { continue };
                                        for bb in 0..kw {
                                            let Some(x_in) = tap(c, bb, stride, padding, iw) else { continue };
                                            let wi = ((o * ic + i) * kh + a) * kw + bb;
                                            let xi = (i * ih + y_in) * iw + x_in;
                                            gw[wi] += g * x[xi];
                                            if need_dx {
                                                dx[xi] += g * w[wi];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                LayerSpec::Linear { in_features, .. } => {
                    p -= 1;
                    let w = &params.weights[p];
                    let (gw, gb) = (&mut grads.weights[p], &mut grads.biases[p]);
                    for (i, &g) in dy.iter().enumerate() {
                        if g == F::zero() {
                            continue;
                        }
                        gb[i] += g;
                        let row = i * in_features;
                        for j in 0..in_features {
                            gw[row + j] += g * x[j];
                            if need_dx {
                                dx[j] += g * w[row + j];
                            }
                        }
                    }
                }
                LayerSpec::MaxPool2d { .. } => {
                    for (o, &g) in dy.iter().enumerate() {
                        dx[cache.pool_routes[li][o]] += g;
                    }
                }
                LayerSpec::Relu => {
                    for ((d, &g), &v) in dx.iter_mut().zip(&dy).zip(x.iter()) {
                        *d = if v > F::zero() { g } else { F::zero() };
                    }
                }
                LayerSpec::Flatten => dx.copy_from_slice(&dy),
            }
            dy = dx;
        }
    }
}

fn kernel_dims(spec: &LayerSpec) -> (usize, usize) {
    match *spec {
        LayerSpec::Conv2d { kernel_h, kernel_w, .. } => (kernel_h, kernel_w),
        _ => unreachable!(),
    }
}

#[inline]
fn tap(o: usize, k: usize, stride: usize, padding: usize, extent: usize) -> Option<usize> {
    let pos = (o * stride + k).checked_sub(padding)?;
    (pos < extent).then_some(pos)
}

/// Softmax cross-entropy loss and its gradient w.r.t. the logits.
pub(crate) fn softmax_cross_entropy<F: Float>(logits: &[F], label: usize, dlogits: &mut [F]) -> F {
    let max = logits.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
    let mut denom = F::zero();
    for (d, &v) in dlogits.iter_mut().zip(logits) {
        *d = (v - max).exp();
        denom = denom + *d;
    }
    for d in dlogits.iter_mut() {
        *d = *d / denom;
    }
    let loss = -(dlogits[label].ln());
    dlogits[label] = dlogits[label] - F::one();
    loss
}

struct AdamState {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

const ADAM_BETA1: f32 = 0.9;
const ADAM_BETA2: f32 = 0.999;
const ADAM_EPS: f32 = 1e-8;

/// Per-sample loss and gradients, with a reusable forward cache.
fn sample_gradient(
    net: &Net<'_>,
    params: &Params<f32>,
    data: &Dataset,
    i: usize,
    cache: &mut Cache<f32>,
    grads: &mut Params<f32>,
) -> f32 {
    net.forward(params, data.image(i), cache);
    let logits = cache.acts.last().expect("nonempty");
    let mut dlogits = vec![0.0f32; logits.len()];
    let loss = softmax_cross_entropy(logits, data.label(i), &mut dlogits);
    net.backward(params, cache, &dlogits, grads);
    loss
}

/// Sum of per-sample gradients over `batch`, accumulated in batch order so
/// the result does not depend on how the samples were scheduled.
fn batch_gradient(
    net: &Net<'_>,
    params: &Params<f32>,
    data: &Dataset,
    batch: &[usize],
    exec: Execution,
    total: &mut Params<f32>,
) -> Vec<f32> {
    total.fill_zero();
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel if batch.len() > 1 => {
            use rayon::prelude::*;
            let per_sample: Vec<(f32, Params<f32>)> = batch
                .par_iter()
                .map_init(
                    || net.new_cache::<f32>(),
                    |cache, &i| {
                        let mut g = params.zeros_like();
                        let loss = sample_gradient(net, params, data, i, cache, &mut g);
                        (loss, g)
                    },
                )
                .collect();
            per_sample
                .into_iter()
                .map(|(loss, g)| {
                    total.add_assign(&g);
                    loss
                })
                .collect()
        }
        _ => {
            let mut cache = net.new_cache::<f32>();
            let mut g = params.zeros_like();
            batch
                .iter()
                .map(|&i| {
                    g.fill_zero();
                    let loss = sample_gradient(net, params, data, i, &mut cache, &mut g);
                    total.add_assign(&g);
                    loss
                })
                .collect()
        }
    }
}

/// Trains `model` with softmax cross-entropy and returns it with its
/// accuracy on `eval`. Weights masked out by `mask` stay exactly zero.
pub fn train(
    model: &ModelGraph,
    train_set: &Dataset,
    eval_set: &Dataset,
    cfg: &TrainConfig,
    mask: Option<&PruneMask>,
) -> Result<(ModelGraph, f64)> {
    train_with(model, train_set, eval_set, cfg, mask, Execution::default())
}

pub fn train_with(
    model: &ModelGraph,
    train_set: &Dataset,
    eval_set: &Dataset,
    cfg: &TrainConfig,
    mask: Option<&PruneMask>,
    exec: Execution,
) -> Result<(ModelGraph, f64)> {
    cfg.validate()?;
    let mut out = model.clone();
    if let Some(m) = mask {
        m.apply(&mut out);
    }
    if cfg.epochs > 0 {
        if train_set.is_empty() {
            return Err(Error::EmptyDataset);
        }
        run_epochs(&mut out, train_set, cfg, mask, exec, |_, _| {})?;
    }
    let acc = evaluate(&out, eval_set)?;
    Ok((out, acc))
}

/// Training loop proper; `on_epoch(epoch, model)` runs after every epoch.
pub fn run_epochs(
    model: &mut ModelGraph,
    data: &Dataset,
    cfg: &TrainConfig,
    mask: Option<&PruneMask>,
    exec: Execution,
    mut on_epoch: impl FnMut(usize, &ModelGraph),
) -> Result<()> {
    cfg.validate()?;
    let net_model = model.clone();
    let net = Net::new(&net_model);
    let mut params = Params::<f32>::from_model(model);
    let mut grads = params.zeros_like();
    let n_params = params.len();
    let mut adam = AdamState {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        t: 0,
    };
    // Flattened mask aligned with `Params::all`; biases are never masked.
    let keep: Option<Vec<bool>> = mask.map(|m| {
        m.layers()
            .iter()
            .flatten()
            .copied()
            .chain(std::iter::repeat_n(true, params.biases.iter().map(Vec::len).sum()))
            .collect()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let losses = batch_gradient(&net, &params, data, batch, exec, &mut grads);
            let loss = losses.iter().sum::<f32>() / batch.len() as f32;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step, loss });
            }
            let inv = 1.0 / batch.len() as f32;
            grads.all_mut().for_each(|g| *g *= inv);
            if let Some(keep) = &keep {
                for (g, &k) in grads.all_mut().zip(keep) {
                    if !k {
                        *g = 0.0;
                    }
                }
            }
            apply_update(cfg, &mut params, &grads, &mut adam);
            if let Some(keep) = &keep {
                for (w, &k) in params.all_mut().zip(keep) {
                    if !k {
                        *w = 0.0;
                    }
                }
            }
        }
        params.write_back(model);
        on_epoch(epoch, model);
    }
    Ok(())
}

fn apply_update(cfg: &TrainConfig, params: &mut Params<f32>, grads: &Params<f32>, adam: &mut AdamState) {
    let lr = cfg.learning_rate;
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (w, g) in params.all_mut().zip(grads.all()) {
                *w -= lr * g;
            }
        }
        Optimizer::Adam => {
            adam.t += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(adam.t);
            let bc2 = 1.0 - ADAM_BETA2.powi(adam.t);
            for (((w, g), m), v) in params
                .all_mut()
                .zip(grads.all())
                .zip(adam.m.iter_mut())
                .zip(adam.v.iter_mut())
            {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Loss of one sample in `f64`.
fn loss_f64(net: &Net<'_>, params: &Params<f64>, input: &[f64], label: usize, cache: &mut Cache<f64>) -> f64 {
    net.forward(params, input, cache);
    let logits = cache.acts.last().expect("nonempty");
    let mut d = vec![0.0; logits.len()];
    softmax_cross_entropy(logits, label, &mut d)
}

/// Maximum relative error between backprop gradients and central differences
/// with step `h`, over every parameter of `model` (computed in `f64`).
pub fn grad_check(model: &ModelGraph, input: &TensorF32, label: usize, h: f64) -> Result<f64> {
    let net = Net::new(model);
    if input.len() != net.shapes[0].numel() {
        return Err(crate::error::shape_mismatch(0, net.shapes[0].dims(), input.shape()));
    }
    let x: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();
    let params = Params::<f64>::from_model(model);
    let mut cache = net.new_cache::<f64>();

    let analytic = analytic_gradients(model, input, label);

    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let n = params.len();
    for k in 0..n {
        let orig = *probe.at_mut(k);
        *probe.at_mut(k) = orig + h;
        let plus = loss_f64(&net, &probe, &x, label, &mut cache);
        *probe.at_mut(k) = orig - h;
        let minus = loss_f64(&net, &probe, &x, label, &mut cache);
        *probe.at_mut(k) = orig;
        let fd = (plus - minus) / (2.0 * h);
        let an = analytic[k];
        let rel = (an - fd).abs() / (an.abs() + fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Backprop gradients of one sample's loss, flattened weights-then-biases.
pub fn analytic_gradients(model: &ModelGraph, input: &TensorF32, label: usize) -> Vec<f64> {
    let net = Net::new(model);
    let x: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();
    let params = Params::<f64>::from_model(model);
    let mut cache = net.new_cache::<f64>();
    net.forward(&params, &x, &mut cache);
    let logits = cache.acts.last().expect("nonempty").clone();
    let mut d = vec![0.0; logits.len()];
    softmax_cross_entropy(&logits, label, &mut d);
    let mut grads = params.zeros_like();
    net.backward(&params, &cache, &d, &mut grads);
    grads.all().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerSpec;

    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let class = i % 2;
            let centre = if class == 0 { -1.0 } else { 1.0 };
            images.push(centre + rng.gen_range(-0.4..0.4));
            images.push(centre + rng.gen_range(-0.4..0.4));
            labels.push(class);
        }
        Dataset::new([1, 1, 2], images, labels).unwrap()
    }

    fn mlp() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Flatten,
            LayerSpec::linear(2, 8),
            LayerSpec::Relu,
            LayerSpec::linear(8, 2),
        ]
    }

    #[test]
    fn blobs_are_separable_by_hand() {
        // x0 + x1 = 0 separates the classes perfectly
        let data = blobs(200, 1);
        let mut m = ModelGraph::zeros([1, 1, 2], vec![LayerSpec::Flatten, LayerSpec::linear(2, 2)]).unwrap();
        m.weights_mut()[0].data_mut().copy_from_slice(&[-1.0, -1.0, 1.0, 1.0]);
        assert_eq!(evaluate(&m, &data).unwrap(), 1.0);
    }

    #[test]
    fn mlp_learns_blobs() {
        let train_set = blobs(400, 2);
        let test_set = blobs(200, 3);
        let m = init_model([1, 1, 2], mlp(), 7).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let (_, acc) = train(&m, &train_set, &test_set, &cfg, None).unwrap();
        assert!(acc >= 0.95, "accuracy {acc}");
    }

    #[test]
    fn zero_epochs_is_identity() {
        let data = blobs(20, 4);
        let m = init_model([1, 1, 2], mlp(), 3).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (out, acc) = train(&m, &data, &data, &cfg, None).unwrap();
        assert_eq!(out, m);
        assert_eq!(acc, evaluate(&m, &data).unwrap());
    }

    #[test]
    fn masked_weight_stays_zero_every_epoch() {
        let data = blobs(100, 5);
        let m = init_model([1, 1, 2], mlp(), 11).unwrap();
        let mut mask = PruneMask::full(&m);
        mask.layers[0][3] = false;
        mask.layers[1][0] = false;
        let mut model = m.clone();
        mask.apply(&mut model);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let mut epochs_seen = 0;
        run_epochs(&mut model, &data, &cfg, Some(&mask), Execution::default(), |_, m| {
            epochs_seen += 1;
            assert_eq!(m.weights()[0].data()[3], 0.0);
            assert_eq!(m.weights()[1].data()[0], 0.0);
        })
        .unwrap();
        assert_eq!(epochs_seen, 3);
    }

    #[test]
    fn training_is_deterministic_across_execution_modes() {
        let data = blobs(64, 6);
        let m = init_model([1, 1, 2], mlp(), 9).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let (a, _) = train_with(&m, &data, &data, &cfg, None, Execution::Sequential).unwrap();
        let (b, _) = train_with(&m, &data, &data, &cfg, None, Execution::Parallel).unwrap();
        let (c, _) = train_with(&m, &data, &data, &cfg, None, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
    }

    #[test]
    fn divergence_is_reported() {
        let data = blobs(32, 8);
        let mut m = init_model([1, 1, 2], mlp(), 1).unwrap();
        m.biases_mut()[1][0] = f32::NAN;
        let cfg = TrainConfig {
            epochs: 1,
            optimizer: Optimizer::Sgd,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&m, &data, &data, &cfg, None),
            Err(Error::NonFiniteLoss { epoch: 0, .. })
        ));
    }

    #[test]
    fn linear_softmax_grad_check() {
        let m = init_model([1, 1, 6], vec![LayerSpec::Flatten, LayerSpec::linear(6, 4)], 5).unwrap();
        let x = TensorF32::new(vec![1, 1, 6], vec![0.3, -1.2, 0.8, 0.05, -0.4, 1.1]).unwrap();
        let err = grad_check(&m, &x, 2, 1e-3).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn conv_relu_linear_grad_check() {
        let layers = vec![
            LayerSpec::conv(2, 3, 3, 1, 1),
            LayerSpec::Relu,
            LayerSpec::pool(2, 2),
            LayerSpec::Flatten,
            LayerSpec::linear(3 * 3 * 3, 4),
        ];
        let m = init_model([2, 6, 6], layers, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x: Vec<f32> = (0..72).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = TensorF32::new(vec![2, 6, 6], x).unwrap();
        let err = grad_check(&m, &x, 1, 1e-4).unwrap();
        assert!(err < 1e-3, "relative error {err}");
    }

    #[test]
    fn dead_relu_gives_zero_conv_gradients() {
        let layers = vec![
            LayerSpec::conv(1, 2, 3, 1, 0),
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::linear(2 * 2 * 2, 3),
        ];
        let mut m = init_model([1, 4, 4], layers, 4).unwrap();
        // with zero input the conv output equals its bias; make it negative
        m.biases_mut()[0] = vec![-0.5, -0.1];
        let x = TensorF32::zeros(&[1, 4, 4]);
        let g = analytic_gradients(&m, &x, 0);
        assert!(g[..18].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_model([1, 1, 2], mlp(), 5).unwrap();
        let b = init_model([1, 1, 2], mlp(), 5).unwrap();
        assert_eq!(a, b);
        let bound = 1.0 / 2f32.sqrt();
        assert!(a.weights()[0].data().iter().all(|v| v.abs() <= bound));
    }
}
