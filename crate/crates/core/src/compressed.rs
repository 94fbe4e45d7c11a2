//! The deployable unit: layer stack, sparse weight streams, biases and
//! quantization parameters.

use crate::csc::{CscTensor, CscValue};
use crate::error::{Error, Result};
use crate::model::{flatten_weights, infer_shapes, parametric_layers, unflatten_weights, LayerSpec, ModelGraph};
use crate::quantizer::{dequantize_layer, QuantParams};

#[derive(Debug, Clone, PartialEq)]
pub enum CompressedWeights {
    /// Pruned float weights.
    Float(Vec<CscTensor<f32>>),
    /// Pruned and quantized weights with their scales and activation params.
    Int8 { tensors: Vec<CscTensor<i8>>, quant: QuantParams },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedModel {
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    biases: Vec<Vec<f32>>,
    weights: CompressedWeights,
}

fn encode_all<T: CscValue>(layers: &[LayerSpec], flats: &[Vec<T>]) -> Vec<CscTensor<T>> {
    parametric_layers(layers)
        .into_iter()
        .zip(flats)
        .map(|(li, flat)| CscTensor::encode(flat, li))
        .collect()
}

impl CompressedModel {
    pub fn new(
        input_shape: [usize; 3],
        layers: Vec<LayerSpec>,
        biases: Vec<Vec<f32>>,
        weights: CompressedWeights,
    ) -> Result<Self> {
        let m = Self {
            input_shape,
            layers,
            biases,
            weights,
        };
        m.validate()?;
        Ok(m)
    }

    /// Encodes the (already pruned) float weights of `model`.
    pub fn from_float(model: &ModelGraph) -> Result<Self> {
        let flats = flat_weights(model)?;
        Self::new(
            model.input_shape(),
            model.layers().to_vec(),
            model.biases().to_vec(),
            CompressedWeights::Float(encode_all(model.layers(), &flats)),
        )
    }

    /// Encodes quantized codes; `codes[k]` are the flat int8 weights of the
    /// `k`-th parametric layer.
    pub fn from_quantized(model: &ModelGraph, codes: &[Vec<i8>], quant: QuantParams) -> Result<Self> {
        Self::new(
            model.input_shape(),
            model.layers().to_vec(),
            model.biases().to_vec(),
            CompressedWeights::Int8 {
                tensors: encode_all(model.layers(), codes),
                quant,
            },
        )
    }

    pub fn validate(&self) -> Result<()> {
        infer_shapes(self.input_shape, &self.layers)?;
        let params = parametric_layers(&self.layers);
        let stream_refs: Vec<(usize, usize)> = match &self.weights {
            CompressedWeights::Float(t) => t.iter().map(|t| (t.layer_ref(), t.dense_len())).collect(),
            CompressedWeights::Int8 { tensors, .. } => tensors.iter().map(|t| (t.layer_ref(), t.dense_len())).collect(),
        };
        if stream_refs.len() != params.len() || self.biases.len() != params.len() {
            return Err(Error::CountMismatch {
                what: "sparse weight streams".into(),
                declared: stream_refs.len(),
                expected: params.len(),
            });
        }
        for ((&li, &(layer_ref, dense_len)), bias) in params.iter().zip(&stream_refs).zip(&self.biases) {
            let spec = &self.layers[li];
            if layer_ref != li {
                return Err(Error::CountMismatch {
                    what: format!("layer reference of stream for layer {li}"),
                    declared: layer_ref,
                    expected: li,
                });
            }
            if dense_len != spec.weight_count() {
                return Err(Error::CountMismatch {
                    what: format!("weights of layer {li}"),
                    declared: dense_len,
                    expected: spec.weight_count(),
                });
            }
            if bias.len() != spec.bias_count() {
                return Err(Error::CountMismatch {
                    what: format!("biases of layer {li}"),
                    declared: bias.len(),
                    expected: spec.bias_count(),
                });
            }
        }
        if let CompressedWeights::Int8 { quant, .. } = &self.weights {
            if quant.weight_scales.len() != params.len() {
                return Err(Error::CountMismatch {
                    what: "weight scales".into(),
                    declared: quant.weight_scales.len(),
                    expected: params.len(),
                });
            }
            if quant.activations.len() != self.layers.len() + 1 {
                return Err(Error::CountMismatch {
                    what: "activation parameters".into(),
                    declared: quant.activations.len(),
                    expected: self.layers.len() + 1,
                });
            }
            if quant.weight_scales.iter().any(|s| !(*s > 0.0)) || quant.activations.iter().any(|a| !(a.scale > 0.0)) {
                return Err(Error::InvalidConfig("quantization scales must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn biases(&self) -> &[Vec<f32>] {
        &self.biases
    }

    pub fn weights(&self) -> &CompressedWeights {
        &self.weights
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self.weights, CompressedWeights::Int8 { .. })
    }

    pub fn quant(&self) -> Option<&QuantParams> {
        match &self.weights {
            CompressedWeights::Int8 { quant, .. } => Some(quant),
            CompressedWeights::Float(_) => None,
        }
    }

    pub fn parametric_layers(&self) -> Vec<usize> {
        parametric_layers(&self.layers)
    }

    /// Per parametric layer: (dense length, real nonzeros, stored entries, stored bytes).
    pub fn stream_stats(&self) -> Vec<StreamStats> {
        match &self.weights {
            CompressedWeights::Float(t) => t.iter().map(StreamStats::of).collect(),
            CompressedWeights::Int8 { tensors, .. } => tensors.iter().map(StreamStats::of).collect(),
        }
    }

    /// Decoded float weights per parametric layer (dequantized for int8).
    pub fn decoded_weights(&self) -> Result<Vec<Vec<f32>>> {
        match &self.weights {
            CompressedWeights::Float(t) => t.iter().map(CscTensor::decode).collect(),
            CompressedWeights::Int8 { tensors, quant } => tensors
                .iter()
                .zip(&quant.weight_scales)
                .map(|(t, &s)| Ok(dequantize_layer(&t.decode()?, s)))
                .collect(),
        }
    }

    /// Dense float model equivalent to the stored weights.
    pub fn to_dense(&self) -> Result<ModelGraph> {
        let params = self.parametric_layers();
        let weights = params
            .iter()
            .zip(self.decoded_weights()?)
            .map(|(&li, flat)| unflatten_weights(li, &self.layers[li], flat))
            .collect::<Result<Vec<_>>>()?;
        ModelGraph::new(self.input_shape, self.layers.clone(), weights, self.biases.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamStats {
    pub layer: usize,
    pub dense_len: usize,
    pub nonzeros: usize,
    pub entries: usize,
    pub bytes: usize,
}

impl StreamStats {
    fn of<T: CscValue>(t: &CscTensor<T>) -> Self {
        Self {
            layer: t.layer_ref(),
            dense_len: t.dense_len(),
            nonzeros: t.nonzeros(),
            entries: t.entries(),
            bytes: t.storage_bytes(),
        }
    }
}

fn flat_weights(model: &ModelGraph) -> Result<Vec<Vec<f32>>> {
    model
        .parametric_layers()
        .into_iter()
        .zip(model.weights())
        .map(|(li, w)| flatten_weights(li, &model.layers()[li], w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{lenet5_layers, LENET5_INPUT};
    use crate::trainer::init_model;

    #[test]
    fn float_round_trip_through_streams() {
        let m = init_model(LENET5_INPUT, lenet5_layers(), 1).unwrap();
        let (pruned, _) = crate::pruner::prune_level(&m, 0.9).unwrap();
        let c = CompressedModel::from_float(&pruned).unwrap();
        assert_eq!(c.to_dense().unwrap(), pruned);
        let stats = c.stream_stats();
        assert_eq!(stats.iter().map(|s| s.dense_len).sum::<usize>(), 61470);
    }

    #[test]
    fn mismatched_stream_rejected() {
        let m = init_model([1, 4, 4], vec![LayerSpec::Flatten, LayerSpec::linear(16, 2)], 1).unwrap();
        let bad = CompressedWeights::Float(vec![CscTensor::encode(&[1.0f32; 15], 1)]);
        assert!(matches!(
            CompressedModel::new([1, 4, 4], m.layers().to_vec(), m.biases().to_vec(), bad),
            Err(Error::CountMismatch { declared: 15, expected: 32, .. })
        ));
    }
}
