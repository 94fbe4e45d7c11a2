//! Inference straight from delta-indexed weight streams.
//!
//! Fully connected layers walk the stream once while sweeping every
//! `(output, input)` position in flat order; convolutions rebuild one output
//! channel's kernel at a time into a scratch buffer and run the dense
//! per-channel convolution on it. In both cases the stream cursor only moves
//! forward, so each stream is read exactly once per call.
//!
//! The int8 path accumulates `w * (x - zero_point)` in `i32`, rescales with
//! `weight_scale * input_scale`, adds the float bias and re-quantizes to the
//! output boundary. ReLU and max pooling run on the codes directly.

use crate::compressed::{CompressedModel, CompressedWeights};
use crate::csc::{CscTensor, CscValue};
use crate::dense::{apply_dense_layer, conv_geom, ActivationBuffers};
use crate::error::{shape_mismatch, Error, Result};
use crate::kernels::{self, ConvGeom};
use crate::model::{ActShape, LayerSpec};
use crate::quantizer::AffineParams;
use crate::tensor::TensorF32;

/// How a kernel obtains its weights from the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    /// Single forward pass with a cursor.
    #[default]
    Stream,
    /// Re-decode from the start of the stream for every weight.
    Rescan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KernelChoice {
    pub fc: Access,
    pub conv: Access,
}

impl KernelChoice {
    pub const IMPROVED: Self = Self {
        fc: Access::Stream,
        conv: Access::Stream,
    };
    pub const NAIVE: Self = Self {
        fc: Access::Rescan,
        conv: Access::Rescan,
    };
}

fn overrun_check(position: usize, dense_len: usize) -> Result<()> {
    if position != usize::MAX {
        return Err(Error::DeltaOverrun { position, dense_len });
    }
    Ok(())
}

/// Fully connected sweep over a stream of `c` rows by `r` columns.
///
/// `mac(acc, w, j)` folds a stored weight at input `j` into the row
/// accumulator, `emit(i, acc)` receives each finished row. Returns the number
/// of cursor advances.
#[inline]
pub fn fc_stream<T: CscValue, A: Copy>(
    t: &CscTensor<T>,
    r: usize,
    c: usize,
    zero: A,
    mut mac: impl FnMut(A, T, usize) -> A,
    mut emit: impl FnMut(usize, A),
) -> Result<usize> {
    if r * c != t.dense_len() {
        return Err(shape_mismatch(t.layer_ref(), vec![t.dense_len()], vec![c, r]));
    }
    let values = t.values();
    let mut cursor = t.cursor();
    for i in 0..c {
        let mut sum = zero;
        for j in 0..r {
            if let Some(s) = cursor.seek(i * r + j) {
                sum = mac(sum, values[s], j);
            }
        }
        emit(i, sum);
    }
    if !cursor.is_exhausted() {
        // entries left beyond the dense length
        cursor.seek(r * c);
        overrun_check(cursor.position(), t.dense_len())?;
    }
    Ok(cursor.advances())
}

/// Fully connected sweep that re-decodes each weight from the stream start.
pub fn fc_rescan<T: CscValue, A: Copy>(
    t: &CscTensor<T>,
    r: usize,
    c: usize,
    zero: A,
    mut mac: impl FnMut(A, T, usize) -> A,
    mut emit: impl FnMut(usize, A),
) -> Result<()> {
    if r * c != t.dense_len() {
        return Err(shape_mismatch(t.layer_ref(), vec![t.dense_len()], vec![c, r]));
    }
    for i in 0..c {
        let mut sum = zero;
        for j in 0..r {
            let w = t.lookup_from_start(i * r + j);
            if !w.is_zero() {
                sum = mac(sum, w, j);
            }
        }
        emit(i, sum);
    }
    Ok(())
}

/// Rebuilds every output channel's kernel in turn into `kernel`
/// (`weight_size` long) and hands it to `per_channel`. Returns cursor advances.
#[inline]
pub fn conv_stream<T: CscValue>(
    t: &CscTensor<T>,
    out_channels: usize,
    kernel: &mut [T],
    mut per_channel: impl FnMut(usize, &[T]),
) -> Result<usize> {
    let weight_size = kernel.len();
    if out_channels * weight_size != t.dense_len() {
        return Err(shape_mismatch(
            t.layer_ref(),
            vec![t.dense_len()],
            vec![out_channels, weight_size],
        ));
    }
    let values = t.values();
    let mut cursor = t.cursor();
    for i in 0..out_channels {
        let begin = i * weight_size;
        for (j, k) in kernel.iter_mut().enumerate() {
            *k = match cursor.seek(begin + j) {
                Some(s) => values[s],
                None => T::default(),
            };
        }
        per_channel(i, kernel);
    }
    if !cursor.is_exhausted() {
        cursor.seek(t.dense_len());
        overrun_check(cursor.position(), t.dense_len())?;
    }
    Ok(cursor.advances())
}

pub fn conv_rescan<T: CscValue>(
    t: &CscTensor<T>,
    out_channels: usize,
    kernel: &mut [T],
    mut per_channel: impl FnMut(usize, &[T]),
) -> Result<()> {
    let weight_size = kernel.len();
    if out_channels * weight_size != t.dense_len() {
        return Err(shape_mismatch(
            t.layer_ref(),
            vec![t.dense_len()],
            vec![out_channels, weight_size],
        ));
    }
    for i in 0..out_channels {
        for (j, k) in kernel.iter_mut().enumerate() {
            *k = t.lookup_from_start(i * weight_size + j);
        }
        per_channel(i, kernel);
    }
    Ok(())
}

/// Float fully connected layer from a stream; `out[i] = sum_j w[i, j] x[j] + bias[i]`.
/// Returns the cursor advances.
pub fn fc_sparse_into(t: &CscTensor<f32>, input: &[f32], bias: &[f32], out: &mut [f32]) -> Result<usize> {
    let (r, c) = (input.len(), out.len());
    if bias.len() != c {
        return Err(shape_mismatch(t.layer_ref(), vec![c], vec![bias.len()]));
    }
    fc_stream(t, r, c, 0.0f32, |acc, w, j| acc + w * input[j], |i, acc| out[i] = acc + bias[i])
}

pub fn fc_sparse(t: &CscTensor<f32>, input: &[f32], bias: &[f32], r: usize, c: usize) -> Result<Vec<f32>> {
    if input.len() != r {
        return Err(shape_mismatch(t.layer_ref(), vec![r], vec![input.len()]));
    }
    let mut out = vec![0.0; c];
    fc_sparse_into(t, input, bias, &mut out)?;
    Ok(out)
}

/// Int8 fully connected accumulators `sum_j w[i, j] * (x[j] - in_zero)`.
pub fn fc_sparse_i8_acc(t: &CscTensor<i8>, input: &[i8], in_zero: i32, acc: &mut [i32]) -> Result<usize> {
    let r = input.len();
    fc_stream(
        t,
        r,
        acc.len(),
        0i32,
        |a, w, j| a + w as i32 * (input[j] as i32 - in_zero),
        |i, a| acc[i] = a,
    )
}

/// Float convolution from a stream; returns the output `(out_c, out_h, out_w)`.
pub fn conv_sparse(t: &CscTensor<f32>, input: &TensorF32, bias: &[f32], spec: &LayerSpec) -> Result<TensorF32> {
    let dims = input.shape();
    if dims.len() != 3 {
        return Err(shape_mismatch(t.layer_ref(), "(C, H, W)", dims));
    }
    let in_shape = ActShape::Spatial {
        c: dims[0],
        h: dims[1],
        w: dims[2],
    };
    let out_shape = crate::model::layer_output_shape(t.layer_ref(), spec, in_shape)?;
    let g = conv_geom(spec, in_shape, out_shape);
    let mut out = vec![0.0; out_shape.numel()];
    let mut kernel = vec![0.0; g.kernel_len()];
    conv_sparse_into(t, input.data(), bias, &g, &mut kernel, &mut out)?;
    TensorF32::new(out_shape.dims(), out)
}

pub fn conv_sparse_into(
    t: &CscTensor<f32>,
    input: &[f32],
    bias: &[f32],
    g: &ConvGeom,
    kernel: &mut [f32],
    out: &mut [f32],
) -> Result<usize> {
    let plane = g.out_plane();
    conv_stream(t, bias.len(), kernel, |i, k| {
        kernels::conv2d_channel_f32(input, k, bias[i], g, &mut out[i * plane..(i + 1) * plane])
    })
}

/// Int8 convolution accumulators (one `i32` per output element).
pub fn conv_sparse_i8_acc(
    t: &CscTensor<i8>,
    input: &[i8],
    in_zero: i32,
    out_channels: usize,
    g: &ConvGeom,
    kernel: &mut [i8],
    acc: &mut [i32],
) -> Result<usize> {
    let plane = g.out_plane();
    conv_stream(t, out_channels, kernel, |i, k| {
        kernels::conv2d_channel_i8(input, in_zero, k, g, &mut acc[i * plane..(i + 1) * plane])
    })
}

/// Boundary whose affine parameters encode each boundary's activation in the
/// int8 path. A Conv/Linear directly followed by ReLU writes into the ReLU
/// output's range; ReLU, MaxPool and Flatten keep their input's encoding.
pub fn activation_domains(layers: &[LayerSpec]) -> Vec<usize> {
    let mut domains = vec![0; layers.len() + 1];
    for (i, spec) in layers.iter().enumerate() {
        domains[i + 1] = if spec.is_parametric() {
            if matches!(layers.get(i + 1), Some(LayerSpec::Relu)) {
                i + 2
            } else {
                i + 1
            }
        } else {
            domains[i]
        };
    }
    domains
}

/// Counters filled in by every [`SparseEngine::run`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecStats {
    /// Cursor advances per parametric layer in the last run (0 for rescans).
    pub cursor_advances: Vec<usize>,
    /// Stored entries per parametric layer.
    pub stream_entries: Vec<usize>,
    /// Largest activation (elements) written to either ping-pong buffer.
    pub peak_activation: usize,
    /// Largest kernel scratch (elements) used by a convolution.
    pub peak_scratch: usize,
}

/// Where the current activation lives during an int8 run.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Domain {
    Float,
    Int(usize),
}

/// Execution context over a [`CompressedModel`]: ping-pong buffers, kernel
/// scratch and counters. One context is single-threaded; build one per thread.
pub struct SparseEngine<'m> {
    model: &'m CompressedModel,
    shapes: Vec<ActShape>,
    choice: KernelChoice,
    fbuf: ActivationBuffers<f32>,
    qbuf: ActivationBuffers<i8>,
    fscratch: Vec<f32>,
    qscratch: Vec<i8>,
    acc: Vec<i32>,
    facc: Vec<f32>,
    domains: Vec<usize>,
    stats: ExecStats,
}

/// Buffer sizing shared with the code generator's memory plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferPlan {
    /// Elements per ping-pong buffer.
    pub activation: usize,
    /// Elements of the per-channel kernel scratch.
    pub scratch: usize,
    /// Elements per float buffer for layers that run before the first
    /// parametric layer of an int8 model with a float input. The input
    /// itself is read from caller memory and is not counted.
    pub float_prefix: usize,
}

/// Index of the first parametric layer.
fn first_parametric(layers: &[LayerSpec]) -> usize {
    layers.iter().position(LayerSpec::is_parametric).unwrap_or(layers.len())
}

pub fn buffer_plan(model: &CompressedModel) -> BufferPlan {
    let shapes = infer(model);
    let scratch = model
        .layers()
        .iter()
        .filter(|l| matches!(l, LayerSpec::Conv2d { .. }))
        .map(LayerSpec::weight_block)
        .max()
        .unwrap_or(0);
    let float_input = match model.quant() {
        Some(q) => !q.input_quantized,
        None => true,
    };
    if !model.is_quantized() {
        return BufferPlan {
            activation: shapes.iter().map(ActShape::numel).max().unwrap_or(0),
            scratch,
            float_prefix: 0,
        };
    }
    // Boundaries up to and including the first parametric layer's input stay
    // float when the input is not quantized.
    let first = first_parametric(model.layers());
    let int_from = if float_input { first + 1 } else { 0 };
    BufferPlan {
        activation: shapes[int_from.min(shapes.len() - 1)..]
            .iter()
            .map(ActShape::numel)
            .max()
            .unwrap_or(0),
        scratch,
        float_prefix: if float_input {
            shapes[1..=first.min(shapes.len() - 1)]
                .iter()
                .map(ActShape::numel)
                .max()
                .unwrap_or(0)
        } else {
            0
        },
    }
}

fn infer(model: &CompressedModel) -> Vec<ActShape> {
    crate::model::infer_shapes(model.input_shape(), model.layers()).expect("validated")
}

impl<'m> SparseEngine<'m> {
    pub fn new(model: &'m CompressedModel) -> Self {
        Self::with_kernels(model, KernelChoice::IMPROVED)
    }

    pub fn with_kernels(model: &'m CompressedModel, choice: KernelChoice) -> Self {
        let shapes = infer(model);
        let plan = buffer_plan(model);
        let max_out = shapes.iter().map(ActShape::numel).max().unwrap_or(0);
        let quantized = model.is_quantized();
        let (fcap, qcap) = if quantized {
            (plan.float_prefix.max(shapes[0].numel()), plan.activation)
        } else {
            (plan.activation, 0)
        };
        Self {
            model,
            shapes,
            choice,
            fbuf: ActivationBuffers::with_capacity(fcap),
            qbuf: ActivationBuffers::with_capacity(qcap),
            fscratch: vec![0.0; if quantized { 0 } else { plan.scratch }],
            qscratch: vec![0; if quantized { plan.scratch } else { 0 }],
            acc: vec![0; if quantized { max_out } else { 0 }],
            facc: vec![0.0; if quantized { max_out } else { 0 }],
            domains: activation_domains(model.layers()),
            stats: ExecStats::default(),
        }
    }

    pub fn stats(&self) -> &ExecStats {
        &self.stats
    }

    /// Logits for one float input. Int8 models quantize the input themselves
    /// when their parameters say so.
    pub fn run(&mut self, input: &[f32]) -> Result<Vec<f32>> {
        let in_len = self.shapes[0].numel();
        if input.len() != in_len {
            return Err(shape_mismatch(0, self.shapes[0].dims(), vec![input.len()]));
        }
        self.stats = ExecStats {
            stream_entries: self.model.stream_stats().iter().map(|s| s.entries).collect(),
            ..ExecStats::default()
        };
        match self.model.weights() {
            CompressedWeights::Float(_) => self.run_float(input),
            CompressedWeights::Int8 { quant, .. } => {
                if quant.input_quantized {
                    let p = quant.activations[0];
                    let q: Vec<i8> = input.iter().map(|&v| p.quantize(v)).collect();
                    self.run_int8_from(Some(&q), None)
                } else {
                    self.run_int8_from(None, Some(input))
                }
            }
        }
    }

    /// Int8 run on an already quantized input (models with `input_quantized`).
    pub fn run_quantized_input(&mut self, input: &[i8]) -> Result<Vec<f32>> {
        let quantized_input = self.model.quant().is_some_and(|q| q.input_quantized);
        if !quantized_input {
            return Err(Error::InvalidConfig("model expects a float input".into()));
        }
        if input.len() != self.shapes[0].numel() {
            return Err(shape_mismatch(0, self.shapes[0].dims(), vec![input.len()]));
        }
        self.stats = ExecStats {
            stream_entries: self.model.stream_stats().iter().map(|s| s.entries).collect(),
            ..ExecStats::default()
        };
        self.run_int8_from(Some(input), None)
    }

    fn run_float(&mut self, input: &[f32]) -> Result<Vec<f32>> {
        let CompressedWeights::Float(tensors) = self.model.weights() else {
            unreachable!()
        };
        let layers = self.model.layers();
        self.fbuf.ping[..input.len()].copy_from_slice(input);
        self.stats.peak_activation = input.len();
        let mut p = 0;
        for (li, spec) in layers.iter().enumerate() {
            let (ins, outs) = (self.shapes[li], self.shapes[li + 1]);
            let ActivationBuffers { ping, pong } = &mut self.fbuf;
            let x = &ping[..ins.numel()];
            let y = &mut pong[..outs.numel()];
            match spec {
                LayerSpec::Linear { .. } => {
                    let (t, b) = (&tensors[p], &self.model.biases()[p]);
                    let adv = match self.choice.fc {
                        Access::Stream => fc_sparse_into(t, x, b, y)?,
                        Access::Rescan => {
                            fc_rescan(t, x.len(), y.len(), 0.0f32, |a, w, j| a + w * x[j], |i, a| y[i] = a + b[i])?;
                            0
                        }
                    };
                    self.stats.cursor_advances.push(adv);
                    p += 1;
                }
                LayerSpec::Conv2d { .. } => {
                    let (t, b) = (&tensors[p], &self.model.biases()[p]);
                    let g = conv_geom(spec, ins, outs);
                    let plane = g.out_plane();
                    let kernel = &mut self.fscratch[..g.kernel_len()];
                    self.stats.peak_scratch = self.stats.peak_scratch.max(kernel.len());
                    let per_channel = |i: usize, k: &[f32]| {
                        kernels::conv2d_channel_f32(x, k, b[i], &g, &mut y[i * plane..(i + 1) * plane])
                    };
                    let adv = match self.choice.conv {
                        Access::Stream => conv_stream(t, b.len(), kernel, per_channel)?,
                        Access::Rescan => {
                            conv_rescan(t, b.len(), kernel, per_channel)?;
                            0
                        }
                    };
                    self.stats.cursor_advances.push(adv);
                    p += 1;
                }
                _ => apply_dense_layer(spec, None, ins, outs, x, y),
            }
            self.stats.peak_activation = self.stats.peak_activation.max(outs.numel());
            self.fbuf.swap();
        }
        let n = self.shapes.last().expect("nonempty").numel();
        Ok(self.fbuf.ping[..n].to_vec())
    }

    fn run_int8_from(&mut self, qinput: Option<&[i8]>, finput: Option<&[f32]>) -> Result<Vec<f32>> {
        let CompressedWeights::Int8 { tensors, quant } = self.model.weights() else {
            unreachable!()
        };
        let layers = self.model.layers();
        let n_layers = layers.len();
        let mut domain = match (qinput, finput) {
            (Some(q), _) => {
                self.qbuf.ping[..q.len()].copy_from_slice(q);
                self.stats.peak_activation = q.len();
                Domain::Int(0)
            }
            (None, Some(f)) => {
                self.fbuf.ping[..f.len()].copy_from_slice(f);
                Domain::Float
            }
            (None, None) => unreachable!(),
        };
        let mut p = 0;
        let mut logits: Option<Vec<f32>> = None;
        for (li, spec) in layers.iter().enumerate() {
            let (ins, outs) = (self.shapes[li], self.shapes[li + 1]);
            let is_last = li + 1 == n_layers;
            if spec.is_parametric() {
                let t = &tensors[p];
                let b = &self.model.biases()[p];
                let w_scale = quant.weight_scales[p];
                let out_params = quant.activations[self.domains[li + 1]];
                let n_out = outs.numel();
                let c = b.len();
                let plane = n_out / c;
                let adv = match domain {
                    Domain::Int(d) => {
                        let in_params = quant.activations[d];
                        let zx = in_params.zero_point as i32;
                        let mult = w_scale * in_params.scale;
                        let x = &self.qbuf.ping[..ins.numel()];
                        let acc = &mut self.acc[..n_out];
                        let adv = int_layer(self.choice, spec, t, x, zx, ins, outs, &mut self.qscratch, acc)?;
                        for (k, (o, &a)) in self.facc[..n_out].iter_mut().zip(acc.iter()).enumerate() {
                            *o = a as f32 * mult + b[k / plane];
                        }
                        adv
                    }
                    Domain::Float => {
                        let x = &self.fbuf.ping[..ins.numel()];
                        let pre = &mut self.facc[..n_out];
                        let adv = float_input_layer(self.choice, spec, t, x, ins, outs, &mut self.qscratch, pre)?;
                        for (k, o) in pre.iter_mut().enumerate() {
                            *o = *o * w_scale + b[k / plane];
                        }
                        adv
                    }
                };
                if let LayerSpec::Conv2d { .. } = spec {
                    self.stats.peak_scratch = self.stats.peak_scratch.max(spec.weight_block());
                }
                self.stats.cursor_advances.push(adv);
                p += 1;
                if is_last {
                    logits = Some(self.facc[..n_out].to_vec());
                } else {
                    let y = &mut self.qbuf.pong[..n_out];
                    for (q, &v) in y.iter_mut().zip(&self.facc[..n_out]) {
                        *q = out_params.quantize(v);
                    }
                    self.stats.peak_activation = self.stats.peak_activation.max(n_out);
                    self.qbuf.swap();
                    domain = Domain::Int(self.domains[li + 1]);
                }
                continue;
            }
            match domain {
                Domain::Float => {
                    let ActivationBuffers { ping, pong } = &mut self.fbuf;
                    apply_dense_layer(spec, None, ins, outs, &ping[..ins.numel()], &mut pong[..outs.numel()]);
                    self.fbuf.swap();
                }
                Domain::Int(d) => {
                    let ActivationBuffers { ping, pong } = &mut self.qbuf;
                    let x = &ping[..ins.numel()];
                    let y = &mut pong[..outs.numel()];
                    match *spec {
                        LayerSpec::Relu => kernels::relu_i8(x, quant.activations[d].zero_point, y),
                        LayerSpec::MaxPool2d { kernel, stride } => {
                            kernels::maxpool2d(x, ins.spatial().expect("spatial"), kernel, stride, y)
                        }
                        LayerSpec::Flatten => y.copy_from_slice(x),
                        _ => unreachable!(),
                    }
                    self.stats.peak_activation = self.stats.peak_activation.max(outs.numel());
                    self.qbuf.swap();
                }
            }
        }
        if let Some(l) = logits {
            return Ok(l);
        }
        let n = self.shapes[n_layers].numel();
        Ok(match domain {
            Domain::Float => self.fbuf.ping[..n].to_vec(),
            Domain::Int(d) => {
                let p: AffineParams = quant.activations[d];
                self.qbuf.ping[..n].iter().map(|&q| p.dequantize(q)).collect()
            }
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn int_layer(
    choice: KernelChoice,
    spec: &LayerSpec,
    t: &CscTensor<i8>,
    x: &[i8],
    zx: i32,
    ins: ActShape,
    outs: ActShape,
    scratch: &mut [i8],
    acc: &mut [i32],
) -> Result<usize> {
    let mac = |a: i32, w: i8, j: usize| a + w as i32 * (x[j] as i32 - zx);
    match spec {
        LayerSpec::Linear { .. } => match choice.fc {
            Access::Stream => fc_stream(t, x.len(), acc.len(), 0i32, mac, |i, a| acc[i] = a),
            Access::Rescan => fc_rescan(t, x.len(), acc.len(), 0i32, mac, |i, a| acc[i] = a).map(|_| 0),
        },
        LayerSpec::Conv2d { out_channels, .. } => {
            let g = conv_geom(spec, ins, outs);
            let plane = g.out_plane();
            let kernel = &mut scratch[..g.kernel_len()];
            let per_channel =
                |i: usize, k: &[i8]| kernels::conv2d_channel_i8(x, zx, k, &g, &mut acc[i * plane..(i + 1) * plane]);
            match choice.conv {
                Access::Stream => conv_stream(t, *out_channels, kernel, per_channel),
                Access::Rescan => conv_rescan(t, *out_channels, kernel, per_channel).map(|_| 0),
            }
        }
        _ => unreachable!(),
    }
}

/// Int8 weights on a float input; writes unscaled sums into `acc`.
#[allow(clippy::too_many_arguments)]
fn float_input_layer(
    choice: KernelChoice,
    spec: &LayerSpec,
    t: &CscTensor<i8>,
    x: &[f32],
    ins: ActShape,
    outs: ActShape,
    scratch: &mut [i8],
    acc: &mut [f32],
) -> Result<usize> {
    let mac = |a: f32, w: i8, j: usize| a + x[j] * w as f32;
    match spec {
        LayerSpec::Linear { .. } => match choice.fc {
            Access::Stream => fc_stream(t, x.len(), acc.len(), 0.0f32, mac, |i, a| acc[i] = a),
            Access::Rescan => fc_rescan(t, x.len(), acc.len(), 0.0f32, mac, |i, a| acc[i] = a).map(|_| 0),
        },
        LayerSpec::Conv2d { out_channels, .. } => {
            let g = conv_geom(spec, ins, outs);
            let plane = g.out_plane();
            let kernel = &mut scratch[..g.kernel_len()];
            let per_channel =
                |i: usize, k: &[i8]| kernels::conv2d_channel_i8w_f32x(x, k, &g, &mut acc[i * plane..(i + 1) * plane]);
            match choice.conv {
                Access::Stream => conv_stream(t, *out_channels, kernel, per_channel),
                Access::Rescan => conv_rescan(t, *out_channels, kernel, per_channel).map(|_| 0),
            }
        }
        _ => unreachable!(),
    }
}

/// Logits of a compressed model for one input tensor.
pub fn forward_sparse(model: &CompressedModel, input: &TensorF32) -> Result<TensorF32> {
    let mut engine = SparseEngine::new(model);
    let out = engine.run(input.data())?;
    TensorF32::new(vec![out.len()], out)
}

/// Top-1 accuracy of the sparse engine over a dataset.
pub fn evaluate_sparse(model: &CompressedModel, data: &crate::data::Dataset) -> Result<f64> {
    evaluate_sparse_with(model, data, crate::parallel::Execution::default())
}

pub fn evaluate_sparse_with(
    model: &CompressedModel,
    data: &crate::data::Dataset,
    exec: crate::parallel::Execution,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = crate::parallel::fold_samples(
        exec,
        data.len(),
        || SparseEngine::new(model),
        || 0usize,
        |engine, hits, i| {
            let logits = engine.run(data.image(i))?;
            if crate::tensor::argmax(&logits) == Some(data.label(i)) {
                *hits += 1;
            }
            Ok(())
        },
        |a, b| a + b,
    )?;
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fc_hand_example() {
        // W = [[1, 0], [0, 2]] with r = c = 2
        let t = CscTensor::encode(&[1.0f32, 0.0, 0.0, 2.0], 0);
        assert_eq!(fc_sparse(&t, &[3.0, 4.0], &[0.0, 0.0], 2, 2).unwrap(), vec![3.0, 8.0]);
    }

    #[test]
    fn fc_all_pruned_gives_bias() {
        let t = CscTensor::encode(&[0.0f32; 6], 0);
        assert_eq!(fc_sparse(&t, &[1.0, 2.0], &[0.5, -1.0, 2.0], 2, 3).unwrap(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn fc_overrun_detected() {
        let t = CscTensor::from_parts_unchecked(vec![1.0f32, 1.0], vec![2, 5], 4, 0);
        assert!(matches!(
            fc_sparse(&t, &[1.0, 1.0], &[0.0, 0.0], 2, 2),
            Err(Error::DeltaOverrun { .. })
        ));
    }

    #[test]
    fn conv_single_tap() {
        let t = CscTensor::encode(&[1.0f32, 0.0, 0.0, 0.0], 0);
        let spec = LayerSpec::conv(1, 1, 2, 1, 0);
        let x = TensorF32::new(vec![1, 2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let y = conv_sparse(&t, &x, &[0.0], &spec).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn conv_pruned_kernel_gives_bias() {
        let t = CscTensor::encode(&[0.0f32; 18], 0);
        let spec = LayerSpec::conv(1, 2, 3, 1, 1);
        let x = TensorF32::new(vec![1, 3, 3], (0..9).map(|v| v as f32).collect()).unwrap();
        let y = conv_sparse(&t, &x, &[0.25, -4.0], &spec).unwrap();
        assert!(y.data()[..9].iter().all(|&v| v == 0.25));
        assert!(y.data()[9..].iter().all(|&v| v == -4.0));
    }

    #[test]
    fn domains_follow_relu_fusion() {
        let layers = crate::model::toy_cnn_layers(4);
        // conv relu pool conv relu pool flatten linear
        assert_eq!(activation_domains(&layers), vec![0, 2, 2, 2, 5, 5, 5, 5, 8]);
    }

    #[test]
    fn cursor_advances_bounded() {
        let mut flat = vec![0.0f32; 40 * 30];
        for (i, v) in flat.iter_mut().enumerate() {
            if i % 7 == 0 {
                *v = i as f32;
            }
        }
        let t = CscTensor::encode(&flat, 0);
        let mut out = vec![0.0; 30];
        let adv = fc_sparse_into(&t, &[1.0; 40], &[0.0; 30], &mut out).unwrap();
        assert!(adv <= t.entries());
    }
}
