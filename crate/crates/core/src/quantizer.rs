//! 8-bit quantization.
//!
//! Weights use symmetric per-layer scale quantization (`q = round(w / s)`,
//! zero point 0, range ±127). Activations use per-boundary affine
//! quantization onto `i8` with bounds calibrated as the exact min/max seen on
//! a calibration set. Rounding is half away from zero throughout, the same
//! rule the generated C kernels implement.

use serde::Serialize;

use crate::data::Dataset;
use crate::dense::forward_dense_trace;
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::parallel::{fold_samples, Execution};
use crate::tensor::{TensorF32, TensorI8};
use crate::trainer::PruneMask;

/// Smallest activation scale; keeps constant layers from dividing by zero.
pub const MIN_ACT_SCALE: f32 = 1e-8;

/// Quotients are clipped to this magnitude before rounding so the integer
/// conversion is identical on every target.
const QUOTIENT_LIMIT: f32 = 32768.0;

/// Round half away from zero.
#[inline]
pub fn round_half_away(v: f32) -> i32 {
    v.round() as i32
}

/// Affine quantization parameters for one activation boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineParams {
    pub min: f32,
    pub max: f32,
    pub scale: f32,
    pub zero_point: i8,
}

impl AffineParams {
    /// Parameters for the observed range `[min, max]`, widened to contain 0.
    pub fn from_range(min: f32, max: f32) -> Self {
        let min = min.min(0.0);
        let max = max.max(0.0);
        let scale = ((max - min) / 255.0).max(MIN_ACT_SCALE);
        let zero_point = round_half_away(-128.0 - min / scale).clamp(-128, 127) as i8;
        Self {
            min,
            max,
            scale,
            zero_point,
        }
    }

    /// Clip to `[min, max]`, then `round(v / scale) + zero_point` saturated to i8.
    #[inline]
    pub fn quantize(&self, v: f32) -> i8 {
        let clipped = if v < self.min {
            self.min
        } else if v > self.max {
            self.max
        } else {
            v
        };
        let r = (clipped / self.scale).clamp(-QUOTIENT_LIMIT, QUOTIENT_LIMIT);
        (round_half_away(r) + self.zero_point as i32).clamp(-128, 127) as i8
    }

    #[inline]
    pub fn dequantize(&self, q: i8) -> f32 {
        (q as i32 - self.zero_point as i32) as f32 * self.scale
    }
}

/// Per-model quantization state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantParams {
    /// One symmetric scale per parametric layer.
    pub weight_scales: Vec<f32>,
    /// One entry per layer boundary; index 0 is the model input.
    pub activations: Vec<AffineParams>,
    pub input_quantized: bool,
}

/// Symmetric 8-bit quantization of one flat weight array.
///
/// An all-zero layer gets scale 1.0 and all-zero codes.
pub fn quantize_layer(weights: &[f32]) -> (Vec<i8>, f32) {
    let max_abs = weights.iter().fold(0.0f32, |m, w| m.max(w.abs()));
    if max_abs == 0.0 {
        return (vec![0; weights.len()], 1.0);
    }
    let scale = max_abs / 127.0;
    let q = weights
        .iter()
        .map(|&w| round_half_away(w / scale).clamp(-127, 127) as i8)
        .collect();
    (q, scale)
}

/// Quantizes every parametric layer; returns `(codes, scale)` per layer.
pub fn quantize_weights(model: &ModelGraph) -> Result<Vec<(TensorI8, f32)>> {
    model
        .weights()
        .iter()
        .map(|w| {
            if w.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("non-finite weight".into()));
            }
            let (q, scale) = quantize_layer(w.data());
            Ok((TensorI8::new(w.shape().to_vec(), q)?, scale))
        })
        .collect()
}

pub fn dequantize_layer(q: &[i8], scale: f32) -> Vec<f32> {
    q.iter().map(|&v| v as f32 * scale).collect()
}

/// Drops positions whose weight quantized to zero: `mask ∧ (q ≠ 0)`.
pub fn requantize_prune(q_weights: &[TensorI8], mask: &PruneMask) -> PruneMask {
    let layers = mask
        .layers()
        .iter()
        .zip(q_weights)
        .map(|(keep, q)| keep.iter().zip(q.data()).map(|(&k, &v)| k && v != 0).collect())
        .collect();
    PruneMask::from_layers(layers)
}

/// Observed min/max at every layer boundary over `data`, widened to include 0.
pub fn activation_ranges(model: &ModelGraph, data: &Dataset, exec: Execution) -> Result<Vec<(f32, f32)>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let boundaries = model.layers().len() + 1;
    fold_samples(
        exec,
        data.len(),
        || (),
        || vec![(0.0f32, 0.0f32); boundaries],
        |_, ranges, i| {
            let acts = forward_dense_trace(model, data.image(i))?;
            for (range, act) in ranges.iter_mut().zip(&acts) {
                for &v in act {
                    range.0 = range.0.min(v);
                    range.1 = range.1.max(v);
                }
            }
            Ok(())
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                x.0 = x.0.min(y.0);
                x.1 = x.1.max(y.1);
            }
            a
        },
    )
}

/// Affine parameters for every boundary, calibrated on `data`.
pub fn calibrate_activations(model: &ModelGraph, data: &Dataset) -> Result<Vec<AffineParams>> {
    calibrate_activations_with(model, data, Execution::default())
}

pub fn calibrate_activations_with(model: &ModelGraph, data: &Dataset, exec: Execution) -> Result<Vec<AffineParams>> {
    Ok(activation_ranges(model, data, exec)?
        .into_iter()
        .map(|(lo, hi)| AffineParams::from_range(lo, hi))
        .collect())
}

/// Affine-quantizes a model input with the input boundary's parameters.
pub fn quantize_input(x: &TensorF32, params: &AffineParams) -> TensorI8 {
    let data = x.data().iter().map(|&v| params.quantize(v)).collect();
    TensorI8::new(x.shape().to_vec(), data).expect("same length")
}
