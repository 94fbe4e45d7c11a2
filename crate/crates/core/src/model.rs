//! Layer vocabulary, the model container and shape inference.
//!
//! Weight layout is fixed so the sparse kernels can walk a flattened stream:
//! `Linear` weights are `(out_features, in_features)` row-major, so flat index
//! `i * in_features + j` addresses output `i`, input `j`. `Conv2d` weights are
//! `(out_channels, in_channels, kernel_h, kernel_w)` row-major, so each output
//! channel owns one contiguous block of `in_channels * kernel_h * kernel_w`
//! values.

use serde::Serialize;

use crate::error::{shape_mismatch, Error, Result};
use crate::tensor::TensorF32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    Linear {
        in_features: usize,
        out_features: usize,
    },
    Flatten,
    Relu,
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
        }
    }

    pub fn pool(kernel: usize, stride: usize) -> Self {
        LayerSpec::MaxPool2d { kernel, stride }
    }

    pub fn linear(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Linear {
            in_features,
            out_features,
        }
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Linear { .. })
    }

    /// Dense weight tensor shape for parametric layers.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => Some(vec![out_channels, in_channels, kernel_h, kernel_w]),
            LayerSpec::Linear {
                in_features,
                out_features,
            } => Some(vec![out_features, in_features]),
            _ => None,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.weight_shape().map_or(0, |s| s.iter().product())
    }

    pub fn bias_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { out_channels, .. } => out_channels,
            LayerSpec::Linear { out_features, .. } => out_features,
            _ => 0,
        }
    }

    /// Weights per output channel (`in_channels * kh * kw`) or per output row.
    pub fn weight_block(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                kernel_h,
                kernel_w,
                ..
            } => in_channels * kernel_h * kernel_w,
            LayerSpec::Linear { in_features, .. } => in_features,
            _ => 0,
        }
    }

    /// Fan-in of one output unit, used by weight initialisation.
    pub fn fan_in(&self) -> usize {
        self.weight_block()
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Relu => "relu",
        }
    }

    fn validate(&self, layer: usize) -> Result<()> {
        let counts: &[usize] = match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                ..
            } => &[*in_channels, *out_channels, *kernel_h, *kernel_w, *stride],
            LayerSpec::MaxPool2d { kernel, stride } => &[*kernel, *stride],
            LayerSpec::Linear {
                in_features,
                out_features,
            } => &[*in_features, *out_features],
            LayerSpec::Flatten | LayerSpec::Relu => &[],
        };
        if counts.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "layer {layer} ({}) has a zero count",
                self.kind()
            )));
        }
        Ok(())
    }
}

/// Activation shape at a layer boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ActShape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl ActShape {
    pub fn numel(&self) -> usize {
        match *self {
            ActShape::Spatial { c, h, w } => c * h * w,
            ActShape::Flat(n) => n,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            ActShape::Spatial { c, h, w } => vec![c, h, w],
            ActShape::Flat(n) => vec![n],
        }
    }

    pub fn spatial(&self) -> Option<(usize, usize, usize)> {
        match *self {
            ActShape::Spatial { c, h, w } => Some((c, h, w)),
            ActShape::Flat(_) => None,
        }
    }
}

fn window_out(input: usize, padding: usize, kernel: usize, stride: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

/// Output shape of a single layer applied to `input`.
pub fn layer_output_shape(layer_idx: usize, layer: &LayerSpec, input: ActShape) -> Result<ActShape> {
    match *layer {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
        } => {
            let (c, h, w) = input
                .spatial()
                .ok_or_else(|| shape_mismatch(layer_idx, format!("({in_channels}, H, W)"), input.dims()))?;
            if c != in_channels {
                return Err(shape_mismatch(layer_idx, format!("({in_channels}, H, W)"), input.dims()));
            }
            match (
                window_out(h, padding, kernel_h, stride),
                window_out(w, padding, kernel_w, stride),
            ) {
                (Some(oh), Some(ow)) => Ok(ActShape::Spatial {
                    c: out_channels,
                    h: oh,
                    w: ow,
                }),
                _ => Err(shape_mismatch(
                    layer_idx,
                    format!("spatial dims >= kernel ({kernel_h}x{kernel_w}) after padding {padding}"),
                    input.dims(),
                )),
            }
        }
        LayerSpec::MaxPool2d { kernel, stride } => {
            let (c, h, w) = input
                .spatial()
                .ok_or_else(|| shape_mismatch(layer_idx, "(C, H, W)", input.dims()))?;
            match (window_out(h, 0, kernel, stride), window_out(w, 0, kernel, stride)) {
                (Some(oh), Some(ow)) => Ok(ActShape::Spatial { c, h: oh, w: ow }),
                _ => Err(shape_mismatch(
                    layer_idx,
                    format!("spatial dims >= pool kernel {kernel}"),
                    input.dims(),
                )),
            }
        }
        LayerSpec::Linear {
            in_features,
            out_features,
        } => match input {
            ActShape::Flat(n) if n == in_features => Ok(ActShape::Flat(out_features)),
            _ => Err(shape_mismatch(layer_idx, vec![in_features], input.dims())),
        },
        LayerSpec::Flatten => Ok(ActShape::Flat(input.numel())),
        LayerSpec::Relu => Ok(input),
    }
}

/// Shapes at every layer boundary: element 0 is the input, element `i + 1`
/// the output of layer `i`.
pub fn infer_shapes(input_shape: [usize; 3], layers: &[LayerSpec]) -> Result<Vec<ActShape>> {
    if layers.is_empty() {
        return Err(Error::InvalidConfig("model has no layers".into()));
    }
    if input_shape.contains(&0) {
        return Err(Error::InvalidConfig(format!("input shape {input_shape:?} has a zero dim")));
    }
    let [c, h, w] = input_shape;
    let mut shapes = Vec::with_capacity(layers.len() + 1);
    shapes.push(ActShape::Spatial { c, h, w });
    for (i, layer) in layers.iter().enumerate() {
        layer.validate(i)?;
        let next = layer_output_shape(i, layer, shapes[i])?;
        shapes.push(next);
    }
    Ok(shapes)
}

/// Flattens a dense weight tensor into the order the sparse codec consumes.
pub fn flatten_weights(layer_idx: usize, layer: &LayerSpec, w: &TensorF32) -> Result<Vec<f32>> {
    let expected = layer
        .weight_shape()
        .ok_or_else(|| shape_mismatch(layer_idx, "parametric layer", layer.kind()))?;
    if w.shape() != expected.as_slice() {
        return Err(shape_mismatch(layer_idx, expected, w.shape()));
    }
    // Row-major storage of (out, in[, kh, kw]) already is the block layout.
    Ok(w.data().to_vec())
}

/// Inverse of [`flatten_weights`].
pub fn unflatten_weights(layer_idx: usize, layer: &LayerSpec, flat: Vec<f32>) -> Result<TensorF32> {
    let shape = layer
        .weight_shape()
        .ok_or_else(|| shape_mismatch(layer_idx, "parametric layer", layer.kind()))?;
    let expected: usize = shape.iter().product();
    if flat.len() != expected {
        return Err(shape_mismatch(layer_idx, vec![expected], vec![flat.len()]));
    }
    TensorF32::new(shape, flat)
}

/// Ordered layer stack with dense float parameters.
///
/// `weights[k]` and `biases[k]` belong to the `k`-th parametric layer
/// (Conv2d or Linear) in stack order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    weights: Vec<TensorF32>,
    biases: Vec<Vec<f32>>,
}

impl ModelGraph {
    pub fn new(
        input_shape: [usize; 3],
        layers: Vec<LayerSpec>,
        weights: Vec<TensorF32>,
        biases: Vec<Vec<f32>>,
    ) -> Result<Self> {
        infer_shapes(input_shape, &layers)?;
        let parametric: Vec<(usize, &LayerSpec)> =
            layers.iter().enumerate().filter(|(_, l)| l.is_parametric()).collect();
        if weights.len() != parametric.len() || biases.len() != parametric.len() {
            return Err(Error::CountMismatch {
                what: "parameter tensors".into(),
                declared: weights.len().max(biases.len()),
                expected: parametric.len(),
            });
        }
        for ((idx, layer), (w, b)) in parametric.iter().zip(weights.iter().zip(&biases)) {
            let shape = layer.weight_shape().expect("parametric");
            if w.shape() != shape.as_slice() {
                return Err(shape_mismatch(*idx, shape, w.shape()));
            }
            if b.len() != layer.bias_count() {
                return Err(shape_mismatch(*idx, vec![layer.bias_count()], vec![b.len()]));
            }
        }
        Ok(Self {
            input_shape,
            layers,
            weights,
            biases,
        })
    }

    /// All-zero parameters for the given architecture.
    pub fn zeros(input_shape: [usize; 3], layers: Vec<LayerSpec>) -> Result<Self> {
        let weights = layers
            .iter()
            .filter_map(|l| l.weight_shape())
            .map(|s| TensorF32::zeros(&s))
            .collect();
        let biases = layers
            .iter()
            .filter(|l| l.is_parametric())
            .map(|l| vec![0.0; l.bias_count()])
            .collect();
        Self::new(input_shape, layers, weights, biases)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn weights(&self) -> &[TensorF32] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f32>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [TensorF32] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f32>] {
        &mut self.biases
    }

    /// Boundary shapes; never fails because construction validated them.
    pub fn shapes(&self) -> Vec<ActShape> {
        infer_shapes(self.input_shape, &self.layers).expect("validated at construction")
    }

    /// Layer indices of the parametric layers, in parameter order.
    pub fn parametric_layers(&self) -> Vec<usize> {
        parametric_layers(&self.layers)
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn weight_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }
}

pub fn parametric_layers(layers: &[LayerSpec]) -> Vec<usize> {
    layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_parametric())
        .map(|(i, _)| i)
        .collect()
}

/// The LeNet-5 variant with 150 / 2,400 / 48,000 / 10,080 / 840 weights.
pub fn lenet5_layers() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(1, 6, 5, 1, 2),
        LayerSpec::Relu,
        LayerSpec::pool(2, 2),
        LayerSpec::conv(6, 16, 5, 1, 0),
        LayerSpec::Relu,
        LayerSpec::pool(2, 2),
        LayerSpec::Flatten,
        LayerSpec::linear(400, 120),
        LayerSpec::Relu,
        LayerSpec::linear(120, 84),
        LayerSpec::Relu,
        LayerSpec::linear(84, 10),
    ]
}

pub const LENET5_INPUT: [usize; 3] = [1, 28, 28];

/// Small conv-pool-conv-pool-flatten-linear net for 1x12x12 inputs.
pub fn toy_cnn_layers(classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(1, 8, 3, 1, 1),
        LayerSpec::Relu,
        LayerSpec::pool(2, 2),
        LayerSpec::conv(8, 16, 3, 1, 1),
        LayerSpec::Relu,
        LayerSpec::pool(2, 2),
        LayerSpec::Flatten,
        LayerSpec::linear(16 * 3 * 3, classes),
    ]
}

pub const TOY_INPUT: [usize; 3] = [1, 12, 12];
