//! End-to-end compression: train, prune-search, quantize, calibrate, encode.

use serde::Serialize;

use crate::compressed::CompressedModel;
use crate::data::Split;
use crate::error::Result;
use crate::model::ModelGraph;
use crate::pruner::{binary_search_sparsity_with_progress, PruneSearchConfig, Trial};
use crate::quantizer::{calibrate_activations, dequantize_layer, quantize_weights, requantize_prune, QuantParams};
use crate::sparse::evaluate_sparse;
use crate::tensor::TensorF32;
use crate::trainer::{train, PruneMask};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub search: PruneSearchConfig,
    /// Train the input model before searching.
    pub initial_training: bool,
    /// Quantize weights and activations to int8.
    pub quantize: bool,
    /// Quantize the model input as well (int8 models only).
    pub quantize_input: bool,
    /// Cap on training samples used for activation calibration.
    pub calibration_samples: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            search: PruneSearchConfig {
                tolerated_acc_loss: 0.01,
                min_search_step: 1.0 / 64.0,
                train: Default::default(),
            },
            initial_training: true,
            quantize: true,
            quantize_input: true,
            calibration_samples: None,
        }
    }
}

/// Progress notifications.
#[derive(Debug, Clone)]
pub enum Event {
    Trained { accuracy: f64 },
    Trial(Trial),
    Searched { sparsity: f64, accuracy: f64 },
    Quantized { sparsity: f64 },
    Evaluated { accuracy: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineSummary {
    pub initial_accuracy: f64,
    pub search_sparsity: f64,
    pub pruned_accuracy: f64,
    pub trials: Vec<Trial>,
    /// Fraction of zero weights in the deployed model.
    pub final_sparsity: f64,
    pub final_accuracy: f64,
    pub dense_weight_bytes: usize,
    pub compressed_weight_bytes: usize,
}

impl PipelineSummary {
    pub fn accuracy_drop(&self) -> f64 {
        self.initial_accuracy - self.final_accuracy
    }

    pub fn payload_ratio(&self) -> f64 {
        self.compressed_weight_bytes as f64 / self.dense_weight_bytes as f64
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    /// The model the search started from (trained if requested).
    pub trained: ModelGraph,
    /// Best pruned and retrained float model.
    pub pruned: ModelGraph,
    pub mask: PruneMask,
    pub compressed: CompressedModel,
    pub summary: PipelineSummary,
}

/// Runs the whole flow. Accuracies are measured on `split.test`; training and
/// calibration use `split.train`.
pub fn compress(model: &ModelGraph, split: &Split, cfg: &PipelineConfig, mut on_event: impl FnMut(&Event)) -> Result<PipelineOutcome> {
    cfg.search.validate()?;
    let trained = if cfg.initial_training {
        let (m, acc) = train(model, &split.train, &split.test, &cfg.search.train, None)?;
        on_event(&Event::Trained { accuracy: acc });
        m
    } else {
        model.clone()
    };

    let search = binary_search_sparsity_with_progress(&trained, &split.train, &split.test, &cfg.search, |t| {
        on_event(&Event::Trial(*t))
    })?;
    let (pruned, mask) = search.best;
    let pruned_accuracy = search
        .trials
        .iter()
        .rev()
        .find(|t| t.accepted)
        .map_or(search.initial_accuracy, |t| t.accuracy);
    on_event(&Event::Searched {
        sparsity: search.best_sparsity,
        accuracy: pruned_accuracy,
    });

    let (compressed, mask) = if cfg.quantize {
        quantize_model(&pruned, &mask, split, cfg)?
    } else {
        (CompressedModel::from_float(&pruned)?, mask)
    };
    if cfg.quantize {
        on_event(&Event::Quantized {
            sparsity: mask.sparsity(),
        });
    }

    let final_accuracy = evaluate_sparse(&compressed, &split.test)?;
    on_event(&Event::Evaluated {
        accuracy: final_accuracy,
    });
    let stats = compressed.stream_stats();
    let dense_len: usize = stats.iter().map(|s| s.dense_len).sum();
    let summary = PipelineSummary {
        initial_accuracy: search.initial_accuracy,
        search_sparsity: search.best_sparsity,
        pruned_accuracy,
        trials: search.trials,
        final_sparsity: 1.0 - stats.iter().map(|s| s.nonzeros).sum::<usize>() as f64 / dense_len as f64,
        final_accuracy,
        dense_weight_bytes: dense_len * 4,
        compressed_weight_bytes: stats.iter().map(|s| s.bytes).sum(),
    };
    Ok(PipelineOutcome {
        trained,
        pruned,
        mask,
        compressed,
        summary,
    })
}

/// Weight quantization, re-pruning of weights that rounded to zero, and
/// activation calibration on the dequantized model.
pub fn quantize_model(
    pruned: &ModelGraph,
    mask: &PruneMask,
    split: &Split,
    cfg: &PipelineConfig,
) -> Result<(CompressedModel, PruneMask)> {
    let quantized = quantize_weights(pruned)?;
    let codes: Vec<_> = quantized.iter().map(|(q, _)| q.clone()).collect();
    let mask = requantize_prune(&codes, mask);
    let mut dequantized = pruned.clone();
    for (w, (q, scale)) in dequantized.weights_mut().iter_mut().zip(&quantized) {
        *w = TensorF32::new(q.shape().to_vec(), dequantize_layer(q.data(), *scale))?;
    }
    let calib = match cfg.calibration_samples {
        Some(n) => split.train.take(n),
        None => split.train.clone(),
    };
    let quant = QuantParams {
        weight_scales: quantized.iter().map(|(_, s)| *s).collect(),
        activations: calibrate_activations(&dequantized, &calib)?,
        input_quantized: cfg.quantize_input,
    };
    let flat: Vec<Vec<i8>> = codes.into_iter().map(|q| q.into_data()).collect();
    Ok((CompressedModel::from_quantized(pruned, &flat, quant)?, mask))
}
