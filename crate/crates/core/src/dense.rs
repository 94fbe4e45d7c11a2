//! Reference float32 forward pass.

use crate::data::Dataset;
use crate::error::{shape_mismatch, Error, Result};
use crate::kernels::{self, ConvGeom};
use crate::model::{ActShape, LayerSpec, ModelGraph};
use crate::parallel::{fold_samples, Execution};
use crate::tensor::{argmax, TensorF32};

/// Two scratch buffers alternating as layer input and output.
#[derive(Debug, Clone)]
pub struct ActivationBuffers<T> {
    pub ping: Vec<T>,
    pub pong: Vec<T>,
}

impl<T: Copy + Default> ActivationBuffers<T> {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            ping: vec![T::default(); capacity],
            pong: vec![T::default(); capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.ping.len()
    }

    pub fn swap(&mut self) {
        std::mem::swap(&mut self.ping, &mut self.pong);
    }
}

/// Largest activation over all layer boundaries.
pub fn max_activation(shapes: &[ActShape]) -> usize {
    shapes.iter().map(ActShape::numel).max().unwrap_or(0)
}

pub(crate) fn conv_geom(spec: &LayerSpec, input: ActShape, output: ActShape) -> ConvGeom {
    let LayerSpec::Conv2d {
        kernel_h,
        kernel_w,
        stride,
        padding,
        ..
    } = *spec
    else {
        unreachable!("conv_geom on {}", spec.kind())
    };
    let (in_c, in_h, in_w) = input.spatial().expect("conv input is spatial");
    let (_, out_h, out_w) = output.spatial().expect("conv output is spatial");
    ConvGeom {
        in_c,
        in_h,
        in_w,
        k_h: kernel_h,
        k_w: kernel_w,
        stride,
        padding,
        out_h,
        out_w,
    }
}

/// Applies one layer with dense float weights.
pub(crate) fn apply_dense_layer(
    spec: &LayerSpec,
    params: Option<(&[f32], &[f32])>,
    in_shape: ActShape,
    out_shape: ActShape,
    input: &[f32],
    out: &mut [f32],
) {
    match *spec {
        LayerSpec::Conv2d { .. } => {
            let (w, b) = params.expect("conv params");
            let g = conv_geom(spec, in_shape, out_shape);
            let block = g.kernel_len();
            let plane = g.out_plane();
            for (oc, bias) in b.iter().enumerate() {
                kernels::conv2d_channel_f32(
                    input,
                    &w[oc * block..(oc + 1) * block],
                    *bias,
                    &g,
                    &mut out[oc * plane..(oc + 1) * plane],
                );
            }
        }
        LayerSpec::Linear { .. } => {
            let (w, b) = params.expect("linear params");
            kernels::linear_f32(w, b, input, out);
        }
        LayerSpec::MaxPool2d { kernel, stride } => {
            kernels::maxpool2d(input, in_shape.spatial().expect("spatial"), kernel, stride, out);
        }
        LayerSpec::Relu => kernels::relu_f32(input, out),
        LayerSpec::Flatten => out.copy_from_slice(input),
    }
}

/// Reusable execution context for [`ModelGraph`] inference.
pub struct DenseEngine<'m> {
    model: &'m ModelGraph,
    shapes: Vec<ActShape>,
    buffers: ActivationBuffers<f32>,
}

impl<'m> DenseEngine<'m> {
    pub fn new(model: &'m ModelGraph) -> Self {
        let shapes = model.shapes();
        let buffers = ActivationBuffers::with_capacity(max_activation(&shapes));
        Self {
            model,
            shapes,
            buffers,
        }
    }

    pub fn buffer_capacity(&self) -> usize {
        self.buffers.capacity()
    }

    /// Runs the network on one sample; the returned slice holds the logits.
    pub fn run(&mut self, input: &[f32]) -> Result<&[f32]> {
        let in_len = self.shapes[0].numel();
        if input.len() != in_len {
            return Err(shape_mismatch(0, self.shapes[0].dims(), vec![input.len()]));
        }
        self.buffers.ping[..in_len].copy_from_slice(input);
        let mut param = 0;
        for (i, spec) in self.model.layers().iter().enumerate() {
            let (ins, outs) = (self.shapes[i], self.shapes[i + 1]);
            let params = if spec.is_parametric() {
                let p = (self.model.weights()[param].data(), self.model.biases()[param].as_slice());
                param += 1;
                Some(p)
            } else {
                None
            };
            let ActivationBuffers { ping, pong } = &mut self.buffers;
            apply_dense_layer(spec, params, ins, outs, &ping[..ins.numel()], &mut pong[..outs.numel()]);
            self.buffers.swap();
        }
        let n = self.shapes.last().expect("nonempty").numel();
        Ok(&self.buffers.ping[..n])
    }
}

/// Logits for one input tensor.
pub fn forward_dense(model: &ModelGraph, input: &TensorF32) -> Result<TensorF32> {
    let [c, h, w] = model.input_shape();
    if input.shape() != [c, h, w] {
        return Err(shape_mismatch(0, [c, h, w], input.shape()));
    }
    let mut engine = DenseEngine::new(model);
    let out = engine.run(input.data())?.to_vec();
    TensorF32::new(vec![out.len()], out)
}

/// Every boundary activation for one input (element 0 is the input itself).
pub fn forward_dense_trace(model: &ModelGraph, input: &[f32]) -> Result<Vec<Vec<f32>>> {
    let shapes = model.shapes();
    if input.len() != shapes[0].numel() {
        return Err(shape_mismatch(0, shapes[0].dims(), vec![input.len()]));
    }
    let mut acts = vec![input.to_vec()];
    let mut param = 0;
    for (i, spec) in model.layers().iter().enumerate() {
        let params = if spec.is_parametric() {
            let p = (model.weights()[param].data(), model.biases()[param].as_slice());
            param += 1;
            Some(p)
        } else {
            None
        };
        let mut out = vec![0.0; shapes[i + 1].numel()];
        apply_dense_layer(spec, params, shapes[i], shapes[i + 1], &acts[i], &mut out);
        acts.push(out);
    }
    Ok(acts)
}

/// Top-1 accuracy of `model` over `data`.
pub fn evaluate(model: &ModelGraph, data: &Dataset) -> Result<f64> {
    evaluate_with(model, data, Execution::default())
}

pub fn evaluate_with(model: &ModelGraph, data: &Dataset, exec: Execution) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = fold_samples(
        exec,
        data.len(),
        || DenseEngine::new(model),
        || 0usize,
        |engine, hits, i| {
            let logits = engine.run(data.image(i))?;
            if argmax(logits) == Some(data.label(i)) {
                *hits += 1;
            }
            Ok(())
        },
        |a, b| a + b,
    )?;
    Ok(correct as f64 / data.len() as f64)
}
