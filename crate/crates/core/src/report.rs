//! Per-layer sparsity, size and kernel timing reports.
//!
//! Sizes use 1 KB = 1000 bytes. The structured form serializes to JSON with
//! the field names below; `docs/formats.md` documents the schema.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::codegen::{estimate_footprint, Footprint};
use crate::compressed::CompressedModel;
use crate::csc::storage_bytes_for;
use crate::dense::DenseEngine;
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::sparse::{Access, KernelChoice, SparseEngine};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerRow {
    pub layer: usize,
    pub kind: String,
    pub total: usize,
    /// Real nonzeros (padding entries excluded).
    pub nonzero: usize,
    pub sparsity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub rows: Vec<LayerRow>,
    pub totals: LayerRow,
}

fn sparsity(total: usize, nonzero: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        1.0 - nonzero as f64 / total as f64
    }
}

pub fn layer_report(model: &CompressedModel) -> LayerReport {
    let rows: Vec<LayerRow> = model
        .stream_stats()
        .iter()
        .map(|s| LayerRow {
            layer: s.layer,
            kind: model.layers()[s.layer].kind().to_string(),
            total: s.dense_len,
            nonzero: s.nonzeros,
            sparsity: sparsity(s.dense_len, s.nonzeros),
        })
        .collect();
    let total = rows.iter().map(|r| r.total).sum();
    let nonzero = rows.iter().map(|r| r.nonzero).sum();
    LayerReport {
        totals: LayerRow {
            layer: model.layers().len(),
            kind: "total".into(),
            total,
            nonzero,
            sparsity: sparsity(total, nonzero),
        },
        rows,
    }
}

/// Weight payload sizes from element counts alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizeFigures {
    /// `total * 4`.
    pub dense_bytes: usize,
    /// `nonzero * (value_width + 1)`, ignoring padding entries.
    pub formula_bytes: usize,
    pub compression: f64,
}

impl SizeFigures {
    pub fn from_counts(total: usize, nonzero: usize, value_width: usize) -> Self {
        let dense_bytes = total * 4;
        let formula_bytes = storage_bytes_for(nonzero, value_width);
        Self {
            dense_bytes,
            formula_bytes,
            compression: dense_bytes as f64 / formula_bytes as f64,
        }
    }
}

pub fn kilobytes(bytes: usize) -> f64 {
    bytes as f64 / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeReport {
    pub value_width: usize,
    pub figures: SizeFigures,
    /// Exact stored bytes including padding entries.
    pub stored_bytes: usize,
    pub padding_entries: usize,
    pub stored_compression: f64,
    pub footprint: Footprint,
}

pub fn size_report(model: &CompressedModel) -> SizeReport {
    let layers = layer_report(model);
    let stats = model.stream_stats();
    let value_width = if model.is_quantized() { 1 } else { 4 };
    let stored_bytes: usize = stats.iter().map(|s| s.bytes).sum();
    let figures = SizeFigures::from_counts(layers.totals.total, layers.totals.nonzero, value_width);
    SizeReport {
        value_width,
        figures,
        stored_bytes,
        padding_entries: stats.iter().map(|s| s.entries - s.nonzeros).sum(),
        stored_compression: figures.dense_bytes as f64 / stored_bytes.max(1) as f64,
        footprint: estimate_footprint(model),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TimingConfig {
    /// Timed repetitions; at least 30.
    pub repetitions: usize,
    /// Untimed repetitions run first.
    pub warmup: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            repetitions: 30,
            warmup: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub variant: String,
    pub fc: Option<Access>,
    pub conv: Option<Access>,
    /// Milliseconds per pass over the input batch.
    pub mean_ms: f64,
    pub std_ms: f64,
    /// `mean_ms / dense mean_ms`.
    pub ratio_to_dense: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub repetitions: usize,
    pub batch: usize,
    pub rows: Vec<TimingRow>,
}

impl TimingReport {
    pub fn row(&self, variant: &str) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

fn time_runs(cfg: &TimingConfig, mut pass: impl FnMut() -> Result<()>) -> Result<(f64, f64)> {
    for _ in 0..cfg.warmup {
        pass()?;
    }
    let mut samples = Vec::with_capacity(cfg.repetitions);
    for _ in 0..cfg.repetitions {
        let start = Instant::now();
        pass()?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, var.sqrt()))
}

/// Times the dense model, the float sparse model and (if given) the int8
/// model on `inputs`, with every combination of streaming and re-scanning
/// kernels. Runs on the calling thread.
pub fn timing_report(
    dense: &ModelGraph,
    sparse_float: &CompressedModel,
    sparse_int8: Option<&CompressedModel>,
    inputs: &[Vec<f32>],
    cfg: &TimingConfig,
) -> Result<TimingReport> {
    if cfg.repetitions < 30 {
        return Err(Error::InvalidConfig(format!(
            "timing needs at least 30 repetitions, got {}",
            cfg.repetitions
        )));
    }
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rows = Vec::new();
    let mut engine = DenseEngine::new(dense);
    let (mean, std) = time_runs(cfg, || {
        for x in inputs {
            std::hint::black_box(engine.run(x)?);
        }
        Ok(())
    })?;
    rows.push(TimingRow {
        variant: "dense".into(),
        fc: None,
        conv: None,
        mean_ms: mean,
        std_ms: std,
        ratio_to_dense: 1.0,
    });
    let dense_mean = mean;
    let choices = [
        ("", KernelChoice::IMPROVED),
        (
            "naive-fc",
            KernelChoice {
                fc: Access::Rescan,
                conv: Access::Stream,
            },
        ),
        (
            "naive-conv",
            KernelChoice {
                fc: Access::Stream,
                conv: Access::Rescan,
            },
        ),
        ("naive", KernelChoice::NAIVE),
    ];
    let mut variants = vec![("sparse-float", sparse_float)];
    if let Some(m) = sparse_int8 {
        variants.push(("sparse-int8", m));
    }
    for (name, model) in variants {
        for (suffix, choice) in choices {
            let mut engine = SparseEngine::with_kernels(model, choice);
            let (mean, std) = time_runs(cfg, || {
                for x in inputs {
                    std::hint::black_box(engine.run(x)?);
                }
                Ok(())
            })?;
            rows.push(TimingRow {
                variant: if suffix.is_empty() {
                    name.to_string()
                } else {
                    format!("{name}/{suffix}")
                },
                fc: Some(choice.fc),
                conv: Some(choice.conv),
                mean_ms: mean,
                std_ms: std,
                ratio_to_dense: mean / dense_mean,
            });
        }
    }
    Ok(TimingReport {
        repetitions: cfg.repetitions,
        batch: inputs.len(),
        rows,
    })
}

/// Everything `report` prints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub layers: LayerReport,
    pub size: SizeReport,
    pub timing: Option<TimingReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn to_text(&self) -> String {
        let mut t = String::new();
        writeln!(t, "{:<8}{:<12}{:>10}{:>10}{:>10}", "layer", "kind", "total", "nonzero", "sparsity").unwrap();
        for r in self.layers.rows.iter().chain(std::iter::once(&self.layers.totals)) {
            let layer = if r.kind == "total" { String::new() } else { r.layer.to_string() };
            writeln!(
                t,
                "{layer:<8}{:<12}{:>10}{:>10}{:>9.2}%",
                r.kind,
                r.total,
                r.nonzero,
                100.0 * r.sparsity
            )
            .unwrap();
        }
        let s = &self.size;
        let f = &s.figures;
        t.push('\n');
        writeln!(t, "dense weights      {:>10} B  ({:.2} KB)", f.dense_bytes, kilobytes(f.dense_bytes)).unwrap();
        writeln!(
            t,
            "formula payload    {:>10} B  ({:.2} KB, {:.1}x)  nonzero * ({} B + 1 B)",
            f.formula_bytes,
            kilobytes(f.formula_bytes),
            f.compression,
            s.value_width
        )
        .unwrap();
        writeln!(
            t,
            "stored payload     {:>10} B  ({:.2} KB, {:.1}x)  {} padding entries",
            s.stored_bytes,
            kilobytes(s.stored_bytes),
            s.stored_compression,
            s.padding_entries
        )
        .unwrap();
        let fp = &s.footprint;
        writeln!(t, "rom                {:>10} B", fp.rom_bytes).unwrap();
        writeln!(t, "ram                {:>10} B", fp.ram_bytes).unwrap();
        if let Some(tr) = &self.timing {
            writeln!(t, "\ntiming: {} repetitions over {} inputs", tr.repetitions, tr.batch).unwrap();
            writeln!(t, "{:<26}{:>12}{:>12}{:>10}", "variant", "mean ms", "std ms", "x dense").unwrap();
            for r in &tr.rows {
                writeln!(
                    t,
                    "{:<26}{:>12.4}{:>12.4}{:>10.2}",
                    r.variant, r.mean_ms, r.std_ms, r.ratio_to_dense
                )
                .unwrap();
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{lenet5_layers, LENET5_INPUT};
    use crate::trainer::init_model;

    #[test]
    fn unpruned_model_has_zero_sparsity() {
        let m = init_model(LENET5_INPUT, lenet5_layers(), 1).unwrap();
        let r = layer_report(&CompressedModel::from_float(&m).unwrap());
        assert!(r.rows.iter().all(|row| row.sparsity == 0.0));
        assert_eq!(r.totals.total, 61_470);
        let totals: Vec<usize> = r.rows.iter().map(|row| row.total).collect();
        assert_eq!(totals, vec![150, 2_400, 48_000, 10_080, 840]);
    }

    #[test]
    fn counts_match_decoded_scan() {
        let m = init_model(LENET5_INPUT, lenet5_layers(), 1).unwrap();
        let (p, _) = crate::pruner::prune_level(&m, 0.95).unwrap();
        let c = CompressedModel::from_float(&p).unwrap();
        let r = layer_report(&c);
        for (row, w) in r.rows.iter().zip(c.decoded_weights().unwrap()) {
            assert_eq!(row.nonzero, w.iter().filter(|v| **v != 0.0).count());
        }
    }

    #[test]
    fn lenet_size_arithmetic() {
        let dense = SizeFigures::from_counts(61_470, 61_470, 4);
        assert_eq!(dense.dense_bytes, 245_880);
        let pruned = SizeFigures::from_counts(61_470, 4_967, 4);
        assert_eq!(pruned.formula_bytes, 24_835);
        assert!((pruned.compression - 9.9).abs() < 0.05);
        let quant = SizeFigures::from_counts(61_470, 4_891, 1);
        assert_eq!(quant.formula_bytes, 9_782);
        assert!((quant.compression - 25.1).abs() < 0.05);
    }

    #[test]
    fn too_few_repetitions_rejected() {
        let m = init_model([1, 2, 2], vec![crate::LayerSpec::Flatten, crate::LayerSpec::linear(4, 2)], 1).unwrap();
        let c = CompressedModel::from_float(&m).unwrap();
        let cfg = TimingConfig {
            repetitions: 5,
            warmup: 0,
        };
        assert!(timing_report(&m, &c, None, &[vec![0.0; 4]], &cfg).is_err());
    }

    #[test]
    fn report_serializes() {
        let m = init_model([1, 2, 2], vec![crate::LayerSpec::Flatten, crate::LayerSpec::linear(4, 2)], 1).unwrap();
        let c = CompressedModel::from_float(&m).unwrap();
        let timing = timing_report(&m, &c, None, &[vec![0.5; 4]], &TimingConfig::default()).unwrap();
        assert_eq!(timing.rows.len(), 5);
        let r = Report {
            layers: layer_report(&c),
            size: size_report(&c),
            timing: Some(timing),
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["layers"]["totals"]["total"], 8);
        assert_eq!(v["timing"]["rows"][0]["variant"], "dense");
        assert!(r.to_text().contains("total"));
    }
}
