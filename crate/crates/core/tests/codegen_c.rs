//! Emitted C against the Rust engine, plus golden files.
//!
//! Compilation tests are skipped when no `cc` is on PATH.

use std::path::{Path, PathBuf};
use std::process::Command;

use sparsedeploy::codegen::{emit, estimate_footprint, parse_logits, write_files, EmitPlan};
use sparsedeploy::model::{toy_cnn_layers, TOY_INPUT};
use sparsedeploy::pipeline::{quantize_model, PipelineConfig};
use sparsedeploy::pruner::prune_level;
use sparsedeploy::sparse::SparseEngine;
use sparsedeploy::synth::bars;
use sparsedeploy::tensor::TensorF32;
use sparsedeploy::trainer::init_model;
use sparsedeploy::{CompressedModel, LayerSpec, ModelGraph, Split};

fn compiler() -> Option<&'static str> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
}

fn split() -> Split {
    Split {
        train: bars(64, 0.3, 11),
        test: bars(16, 0.3, 12),
    }
}

fn toy(quantize: bool, quantize_input: bool) -> CompressedModel {
    let m = init_model(TOY_INPUT, toy_cnn_layers(4), 9).unwrap();
    let (pruned, mask) = prune_level(&m, 0.7).unwrap();
    if !quantize {
        return CompressedModel::from_float(&pruned).unwrap();
    }
    let cfg = PipelineConfig {
        quantize_input,
        ..PipelineConfig::default()
    };
    quantize_model(&pruned, &mask, &split(), &cfg).unwrap().0
}

/// Compiles and runs the emitted program, returning its exit code and logits.
fn build_and_run(cc: &str, dir: &Path, opt: &str) -> (i32, Vec<f32>) {
    let exe = dir.join(format!("model{opt}"));
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Wextra", "-Werror", "-pedantic", opt, "-o"])
        .arg(&exe)
        .arg(dir.join("main.c"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    (
        run.status.code().unwrap(),
        parse_logits(&String::from_utf8_lossy(&run.stdout)).unwrap(),
    )
}

fn check_model(model: &CompressedModel, exact: bool) {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    let data = split().test;
    for sample in 0..3 {
        let plan = EmitPlan::for_model(model).with_input(model, data.image(sample)).unwrap();
        let expected = plan.embedded.as_ref().unwrap().expected_logits.clone();
        let dir = tempfile::tempdir().unwrap();
        write_files(&emit(model, &plan).unwrap(), dir.path()).unwrap();
        for opt in ["-O0", "-O2"] {
            let (code, logits) = build_and_run(cc, dir.path(), opt);
            assert_eq!(code, 0, "top-1 mismatch at {opt}");
            assert_eq!(logits.len(), expected.len());
            for (a, b) in logits.iter().zip(&expected) {
                if exact {
                    assert_eq!(a.to_bits(), b.to_bits(), "{opt}: {logits:?} vs {expected:?}");
                } else {
                    assert!((a - b).abs() < 1e-5, "{opt}: {logits:?} vs {expected:?}");
                }
            }
        }
    }
}

#[test]
fn int8_quantized_input_is_bit_exact() {
    check_model(&toy(true, true), true);
}

#[test]
fn int8_float_input_is_bit_exact() {
    check_model(&toy(true, false), true);
}

#[test]
fn float_model_within_tolerance() {
    check_model(&toy(false, false), false);
}

#[test]
fn float_prefix_layers_compile() {
    // a ReLU and a pool ahead of the first parametric layer, float input
    let layers = vec![
        LayerSpec::Relu,
        LayerSpec::pool(2, 2),
        LayerSpec::conv(1, 2, 3, 1, 0),
        LayerSpec::Flatten,
        LayerSpec::linear(8, 3),
        LayerSpec::Relu,
    ];
    let m = init_model([1, 8, 8], layers, 4).unwrap();
    let images: Vec<f32> = (0..8 * 64).map(|i| ((i * 37 % 101) as f32 / 50.0) - 1.0).collect();
    let data = sparsedeploy::Dataset::new([1, 8, 8], images, vec![0, 1, 2, 0, 1, 2, 0, 1]).unwrap();
    let s = Split {
        train: data.clone(),
        test: data,
    };
    let (pruned, mask) = prune_level(&m, 0.3).unwrap();
    let cfg = PipelineConfig {
        quantize_input: false,
        ..PipelineConfig::default()
    };
    let c = quantize_model(&pruned, &mask, &s, &cfg).unwrap().0;
    assert!(sparsedeploy::sparse::buffer_plan(&c).float_prefix > 0);
    let Some(cc) = compiler() else { return };
    let plan = EmitPlan::for_model(&c).with_input(&c, s.test.image(1)).unwrap();
    let expected = plan.embedded.as_ref().unwrap().expected_logits.clone();
    let dir = tempfile::tempdir().unwrap();
    write_files(&emit(&c, &plan).unwrap(), dir.path()).unwrap();
    let (_, logits) = build_and_run(cc, dir.path(), "-O2");
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&logits), bits(&expected));
}

#[test]
fn corrupted_delta_changes_logits() {
    let Some(cc) = compiler() else { return };
    let model = toy(true, true);
    let plan = EmitPlan::for_model(&model).with_input(&model, split().test.image(0)).unwrap();
    let expected = plan.embedded.as_ref().unwrap().expected_logits.clone();
    let mut files = emit(&model, &plan).unwrap();
    let header = &mut files[0].contents;
    // bump the first delta of the last layer's stream
    let at = header.rfind("static const uint8_t deltas_L").unwrap();
    let open = at + header[at..].find("{\n    ").unwrap() + 6;
    let end = open + header[open..].find(',').unwrap();
    let bumped = header[open..end].parse::<u8>().unwrap().wrapping_add(1);
    header.replace_range(open..end, &bumped.to_string());
    let dir = tempfile::tempdir().unwrap();
    write_files(&files, dir.path()).unwrap();
    let (_, logits) = build_and_run(cc, dir.path(), "-O0");
    assert_ne!(logits, expected);
}

#[test]
fn ram_estimate_matches_engine_peaks() {
    let data = split().test;
    for model in [toy(true, true), toy(true, false), toy(false, false)] {
        let fp = estimate_footprint(&model);
        let mut engine = SparseEngine::new(&model);
        engine.run(data.image(0)).unwrap();
        let stats = engine.stats();
        let width = if model.is_quantized() { 1 } else { 4 };
        assert_eq!(fp.activation_bytes, 2 * stats.peak_activation * width);
        assert_eq!(fp.scratch_bytes, stats.peak_scratch * width);
    }
}

#[test]
fn emitted_array_bytes_match_streams() {
    let model = toy(true, true);
    let files = emit(&model, &EmitPlan::for_model(&model)).unwrap();
    let header = &files[0].contents;
    // count initializer elements of every const array by element type
    let mut bytes = 0;
    for decl in header.split("static const ").skip(1) {
        let ty = decl.split_whitespace().next().unwrap();
        let width = match ty {
            "uint8_t" | "int8_t" => 1,
            "float" => 4,
            "nn_affine" => sparsedeploy::codegen::AFFINE_BYTES,
            other => panic!("unexpected type {other}"),
        };
        let body = &decl[decl.find('=').unwrap() + 1..decl.find(';').unwrap()];
        let count = if ty == "nn_affine" || !decl.contains('[') {
            1
        } else {
            body.split(',').filter(|t| !t.trim().trim_matches(['{', '}']).trim().is_empty()).count()
        };
        bytes += width * count;
    }
    let fp = estimate_footprint(&model);
    assert_eq!(bytes, fp.weight_bytes + fp.bias_bytes + fp.quant_bytes);
    assert_eq!(fp.rom_bytes, bytes);
}

fn golden_model() -> CompressedModel {
    let layers = vec![LayerSpec::Flatten, LayerSpec::linear(6, 4), LayerSpec::Relu, LayerSpec::linear(4, 2)];
    let w1: Vec<f32> = (0..24).map(|i| if i % 3 == 0 { (i as f32 - 11.0) / 8.0 } else { 0.0 }).collect();
    let w2: Vec<f32> = (0..8).map(|i| if i % 2 == 1 { 0.25 * i as f32 } else { 0.0 }).collect();
    let m = ModelGraph::new(
        [1, 2, 3],
        layers,
        vec![TensorF32::new(vec![4, 6], w1).unwrap(), TensorF32::new(vec![2, 4], w2).unwrap()],
        vec![vec![0.5, -0.25, 0.0, 0.125], vec![-1.0, 1.0]],
    )
    .unwrap();
    CompressedModel::from_float(&m).unwrap()
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/two_layer")
}

/// Set `UPDATE_GOLDEN=1` to rewrite the checked-in files.
#[test]
fn two_layer_model_matches_golden_files() {
    let model = golden_model();
    let plan = EmitPlan::for_model(&model)
        .with_input(&model, &[1.0, 0.5, -0.5, 0.25, 0.0, 2.0])
        .unwrap();
    let files = emit(&model, &plan).unwrap();
    let dir = golden_dir();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        write_files(&files, &dir).unwrap();
    }
    for f in &files {
        let golden = std::fs::read_to_string(dir.join(f.name)).unwrap_or_else(|e| panic!("{}: {e}", f.name));
        assert_eq!(f.contents, golden, "{} differs from golden copy", f.name);
    }
}
