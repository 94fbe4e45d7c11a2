//! `.sdm` model container and IDX dataset files.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! "SDM1" | u32 manifest_len | manifest (UTF-8 text) | payload
//! ```
//!
//! The manifest is one directive per line:
//!
//! ```text
//! kind dense|compressed
//! input C H W
//! layer conv2d IN OUT KH KW STRIDE PAD | layer maxpool2d K STRIDE
//! layer linear IN OUT | layer flatten | layer relu
//! stage f32|int8                      (compressed only)
//! input_quantized 0|1                 (int8 only)
//! weight LAYER f32 OFFSET COUNT       (dense only)
//! csc LAYER f32|i8 OFFSET ENTRIES DENSE_LEN
//! bias LAYER f32 OFFSET COUNT
//! wscale LAYER f32 OFFSET 1           (int8 only)
//! act BOUNDARY OFFSET                 (int8 only)
//! ```
//!
//! Offsets are relative to the payload start. A `csc` block is
//! `u32 entry_count | u8 deltas[entry_count] | values[entry_count]`, an `act`
//! block is `f32 min | f32 max | f32 scale | i8 zero_point` (13 bytes).
//! Blocks may not overlap and must cover the payload exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::compressed::{CompressedModel, CompressedWeights};
use crate::csc::CscTensor;
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{parametric_layers, LayerSpec, ModelGraph};
use crate::quantizer::{AffineParams, QuantParams};
use crate::tensor::TensorF32;

pub const SDM_MAGIC: &[u8; 4] = b"SDM1";
const ACT_BLOCK: usize = 13;

/// Either kind of model the container can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum SdmModel {
    Dense(ModelGraph),
    Compressed(CompressedModel),
}

struct Writer {
    manifest: String,
    payload: Vec<u8>,
}

impl Writer {
    fn new(kind: &str, input: [usize; 3], layers: &[LayerSpec]) -> Self {
        let mut manifest = String::new();
        writeln!(manifest, "kind {kind}").unwrap();
        writeln!(manifest, "input {} {} {}", input[0], input[1], input[2]).unwrap();
        for l in layers {
            let line = match *l {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel_h,
                    kernel_w,
                    stride,
                    padding,
                } => format!("layer conv2d {in_channels} {out_channels} {kernel_h} {kernel_w} {stride} {padding}"),
                LayerSpec::MaxPool2d { kernel, stride } => format!("layer maxpool2d {kernel} {stride}"),
                LayerSpec::Linear {
                    in_features,
                    out_features,
                } => format!("layer linear {in_features} {out_features}"),
                LayerSpec::Flatten => "layer flatten".into(),
                LayerSpec::Relu => "layer relu".into(),
            };
            writeln!(manifest, "{line}").unwrap();
        }
        Self {
            manifest,
            payload: Vec::new(),
        }
    }

    fn line(&mut self, s: String) {
        self.manifest.push_str(&s);
        self.manifest.push('\n');
    }

    fn f32s(&mut self, role: &str, layer: usize, values: &[f32]) {
        let off = self.payload.len();
        for v in values {
            self.payload.extend_from_slice(&v.to_le_bytes());
        }
        self.line(format!("{role} {layer} f32 {off} {}", values.len()));
    }

    fn finish(self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.manifest.len() + self.payload.len());
        out.extend_from_slice(SDM_MAGIC);
        out.extend_from_slice(&(self.manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(self.manifest.as_bytes());
        out.extend_from_slice(&self.payload);
        out
    }
}

pub fn save_model(model: &ModelGraph) -> Vec<u8> {
    let mut w = Writer::new("dense", model.input_shape(), model.layers());
    for ((li, weight), bias) in model.parametric_layers().into_iter().zip(model.weights()).zip(model.biases()) {
        w.f32s("weight", li, weight.data());
        w.f32s("bias", li, bias);
    }
    w.finish()
}

pub fn save_compressed(model: &CompressedModel) -> Vec<u8> {
    let mut w = Writer::new("compressed", model.input_shape(), model.layers());
    let params = model.parametric_layers();
    match model.weights() {
        CompressedWeights::Float(tensors) => {
            w.line("stage f32".into());
            for ((&li, t), bias) in params.iter().zip(tensors).zip(model.biases()) {
                let off = w.payload.len();
                w.payload.extend_from_slice(&(t.entries() as u32).to_le_bytes());
                w.payload.extend_from_slice(t.index_deltas());
                for v in t.values() {
                    w.payload.extend_from_slice(&v.to_le_bytes());
                }
                w.line(format!("csc {li} f32 {off} {} {}", t.entries(), t.dense_len()));
                w.f32s("bias", li, bias);
            }
        }
        CompressedWeights::Int8 { tensors, quant } => {
            w.line("stage int8".into());
            w.line(format!("input_quantized {}", quant.input_quantized as u8));
            for (((&li, t), bias), &scale) in params.iter().zip(tensors).zip(model.biases()).zip(&quant.weight_scales) {
                let off = w.payload.len();
                w.payload.extend_from_slice(&(t.entries() as u32).to_le_bytes());
                w.payload.extend_from_slice(t.index_deltas());
                w.payload.extend(t.values().iter().map(|&v| v as u8));
                w.line(format!("csc {li} i8 {off} {} {}", t.entries(), t.dense_len()));
                w.f32s("bias", li, bias);
                w.f32s("wscale", li, &[scale]);
            }
            for (b, a) in quant.activations.iter().enumerate() {
                let off = w.payload.len();
                w.payload.extend_from_slice(&a.min.to_le_bytes());
                w.payload.extend_from_slice(&a.max.to_le_bytes());
                w.payload.extend_from_slice(&a.scale.to_le_bytes());
                w.payload.push(a.zero_point as u8);
                w.line(format!("act {b} {off}"));
            }
        }
    }
    w.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F32,
    I8,
}

#[derive(Debug)]
struct Entry {
    line: usize,
    dtype: Dtype,
    offset: usize,
    count: usize,
    dense_len: usize,
}

struct Manifest {
    kind: String,
    input: [usize; 3],
    layers: Vec<LayerSpec>,
    stage: Option<Dtype>,
    input_quantized: Option<bool>,
    /// (role, index) -> entry
    entries: BTreeMap<(String, usize), Entry>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::ManifestParse {
        line,
        message: message.into(),
    }
}

fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut m = Manifest {
        kind: String::new(),
        input: [0; 3],
        layers: Vec::new(),
        stage: None,
        input_quantized: None,
        entries: BTreeMap::new(),
    };
    let mut saw_input = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut tok = raw.split_ascii_whitespace();
        let Some(key) = tok.next() else { continue };
        let rest: Vec<&str> = tok.collect();
        let nums = |n: usize| -> Result<Vec<usize>> {
            if rest.len() != n {
                return Err(parse_err(line, format!("`{key}` expects {n} fields, got {}", rest.len())));
            }
            rest.iter()
                .map(|s| s.parse::<usize>().map_err(|_| parse_err(line, format!("bad number `{s}`"))))
                .collect()
        };
        let dtype = |s: &str| match s {
            "f32" => Ok(Dtype::F32),
            "i8" => Ok(Dtype::I8),
            other => Err(parse_err(line, format!("unknown dtype `{other}`"))),
        };
        match key {
            "kind" => {
                if rest.len() != 1 {
                    return Err(parse_err(line, "`kind` expects one field"));
                }
                m.kind = rest[0].to_string();
            }
            "input" => {
                let v = nums(3)?;
                m.input = [v[0], v[1], v[2]];
                saw_input = true;
            }
            "layer" => {
                let Some((&kind, args)) = rest.split_first() else {
                    return Err(parse_err(line, "`layer` without a type"));
                };
                let parse_args = |n: usize| -> Result<Vec<usize>> {
                    if args.len() != n {
                        return Err(parse_err(line, format!("`{kind}` expects {n} fields")));
                    }
                    args.iter()
                        .map(|s| s.parse::<usize>().map_err(|_| parse_err(line, format!("bad number `{s}`"))))
                        .collect()
                };
                let spec = match kind {
                    "conv2d" => {
                        let a = parse_args(6)?;
                        LayerSpec::Conv2d {
                            in_channels: a[0],
                            out_channels: a[1],
                            kernel_h: a[2],
                            kernel_w: a[3],
                            stride: a[4],
                            padding: a[5],
                        }
                    }
                    "maxpool2d" => {
                        let a = parse_args(2)?;
                        LayerSpec::MaxPool2d {
                            kernel: a[0],
                            stride: a[1],
                        }
                    }
                    "linear" => {
                        let a = parse_args(2)?;
                        LayerSpec::Linear {
                            in_features: a[0],
                            out_features: a[1],
                        }
                    }
                    "flatten" => {
                        parse_args(0)?;
                        LayerSpec::Flatten
                    }
                    "relu" => {
                        parse_args(0)?;
                        LayerSpec::Relu
                    }
                    other => return Err(parse_err(line, format!("unsupported layer `{other}`"))),
                };
                m.layers.push(spec);
            }
            "stage" => {
                if rest.len() != 1 {
                    return Err(parse_err(line, "`stage` expects one field"));
                }
                m.stage = Some(match rest[0] {
                    "f32" => Dtype::F32,
                    "int8" => Dtype::I8,
                    other => return Err(parse_err(line, format!("unknown stage `{other}`"))),
                });
            }
            "input_quantized" => {
                let v = nums(1)?;
                m.input_quantized = Some(match v[0] {
                    0 => false,
                    1 => true,
                    _ => return Err(parse_err(line, "input_quantized must be 0 or 1")),
                });
            }
            "weight" | "bias" | "wscale" | "csc" => {
                let want = if key == "csc" { 5 } else { 4 };
                if rest.len() != want {
                    return Err(parse_err(line, format!("`{key}` expects {want} fields")));
                }
                let num = |s: &str| s.parse::<usize>().map_err(|_| parse_err(line, format!("bad number `{s}`")));
                let entry = Entry {
                    line,
                    dtype: dtype(rest[1])?,
                    offset: num(rest[2])?,
                    count: num(rest[3])?,
                    dense_len: if key == "csc" { num(rest[4])? } else { 0 },
                };
                let idx = num(rest[0])?;
                if m.entries.insert((key.to_string(), idx), entry).is_some() {
                    return Err(parse_err(line, format!("duplicate `{key} {idx}`")));
                }
            }
            "act" => {
                let v = nums(2)?;
                let entry = Entry {
                    line,
                    dtype: Dtype::F32,
                    offset: v[1],
                    count: 1,
                    dense_len: 0,
                };
                if m.entries.insert(("act".into(), v[0]), entry).is_some() {
                    return Err(parse_err(line, format!("duplicate `act {}`", v[0])));
                }
            }
            other => return Err(parse_err(line, format!("unknown directive `{other}`"))),
        }
    }
    if m.kind.is_empty() {
        return Err(parse_err(0, "missing `kind`"));
    }
    if !saw_input {
        return Err(parse_err(0, "missing `input`"));
    }
    Ok(m)
}

/// Splits a container into manifest text and payload.
fn split_container(bytes: &[u8]) -> Result<(&str, &[u8])> {
    if bytes.len() < 4 || &bytes[..4] != SDM_MAGIC {
        let found = bytes.get(..4.min(bytes.len())).unwrap_or(&[]);
        return Err(Error::BadMagic {
            expected: "SDM1".into(),
            found: format!("{found:02x?}"),
        });
    }
    if bytes.len() < 8 {
        return Err(Error::PayloadTruncated {
            needed: 8,
            available: bytes.len(),
        });
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let end = 8 + len;
    if bytes.len() < end {
        return Err(Error::PayloadTruncated {
            needed: end,
            available: bytes.len(),
        });
    }
    let text = std::str::from_utf8(&bytes[8..end]).map_err(|e| parse_err(0, format!("manifest is not UTF-8: {e}")))?;
    Ok((text, &bytes[end..]))
}

/// Tracks claimed payload ranges.
struct Claims<'a> {
    payload: &'a [u8],
    ranges: Vec<(usize, usize, usize)>,
}

impl<'a> Claims<'a> {
    fn take(&mut self, line: usize, offset: usize, len: usize) -> Result<&'a [u8]> {
        let end = offset.checked_add(len).ok_or_else(|| parse_err(line, "offset overflow"))?;
        if end > self.payload.len() {
            return Err(Error::PayloadTruncated {
                needed: end,
                available: self.payload.len(),
            });
        }
        self.ranges.push((offset, end, line));
        Ok(&self.payload[offset..end])
    }

    fn finish(mut self) -> Result<()> {
        self.ranges.sort_unstable();
        let mut cursor = 0;
        for &(start, end, line) in &self.ranges {
            if start < cursor {
                return Err(parse_err(line, "payload block overlaps a previous block"));
            }
            if start > cursor {
                return Err(parse_err(line, format!("unclaimed payload bytes {cursor}..{start}")));
            }
            cursor = end;
        }
        if cursor != self.payload.len() {
            return Err(Error::CountMismatch {
                what: "payload bytes".into(),
                declared: self.payload.len(),
                expected: cursor,
            });
        }
        Ok(())
    }
}

fn read_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect()
}

fn take_entry<'m>(m: &'m Manifest, role: &str, idx: usize) -> Result<&'m Entry> {
    m.entries
        .get(&(role.to_string(), idx))
        .ok_or_else(|| parse_err(0, format!("missing `{role} {idx}`")))
}

fn check_count(what: String, declared: usize, expected: usize) -> Result<()> {
    if declared != expected {
        return Err(Error::CountMismatch {
            what,
            declared,
            expected,
        });
    }
    Ok(())
}

fn f32_block(claims: &mut Claims<'_>, e: &Entry, role: &str, li: usize, expected: usize) -> Result<Vec<f32>> {
    if e.dtype != Dtype::F32 {
        return Err(parse_err(e.line, format!("`{role}` must be f32")));
    }
    check_count(format!("{role} of layer {li}"), e.count, expected)?;
    Ok(read_f32s(claims.take(e.line, e.offset, 4 * e.count)?))
}

/// Reads the u32 count, deltas and raw value bytes of one csc block.
fn csc_block<'a>(claims: &mut Claims<'a>, e: &Entry, width: usize) -> Result<(&'a [u8], &'a [u8])> {
    let total = 4 + e.count * (1 + width);
    let block = claims.take(e.line, e.offset, total)?;
    let stored = u32::from_le_bytes(block[..4].try_into().expect("4 bytes")) as usize;
    check_count(format!("csc entries on manifest line {}", e.line), stored, e.count)?;
    Ok((&block[4..4 + e.count], &block[4 + e.count..]))
}

/// Loads either kind of model.
pub fn load_sdm(bytes: &[u8]) -> Result<SdmModel> {
    let (text, payload) = split_container(bytes)?;
    let m = parse_manifest(text)?;
    let mut claims = Claims {
        payload,
        ranges: Vec::new(),
    };
    let params = parametric_layers(&m.layers);
    let known = |role: &str| -> usize { m.entries.keys().filter(|(r, _)| r == role).count() };

    let mut biases = Vec::with_capacity(params.len());
    let model = match m.kind.as_str() {
        "dense" => {
            if known("csc") + known("wscale") + known("act") > 0 || m.stage.is_some() {
                return Err(parse_err(0, "compressed directives in a dense model"));
            }
            check_count("weight tensors".into(), known("weight"), params.len())?;
            let mut weights = Vec::with_capacity(params.len());
            for &li in &params {
                let spec = &m.layers[li];
                let e = take_entry(&m, "weight", li)?;
                let data = f32_block(&mut claims, e, "weight", li, spec.weight_count())?;
                weights.push(TensorF32::new(spec.weight_shape().expect("parametric"), data)?);
                let e = take_entry(&m, "bias", li)?;
                biases.push(f32_block(&mut claims, e, "bias", li, spec.bias_count())?);
            }
            check_count("bias vectors".into(), known("bias"), params.len())?;
            SdmModel::Dense(ModelGraph::new(m.input, m.layers.clone(), weights, biases)?)
        }
        "compressed" => {
            let stage = m.stage.ok_or_else(|| parse_err(0, "compressed model without `stage`"))?;
            check_count("csc streams".into(), known("csc"), params.len())?;
            check_count("bias vectors".into(), known("bias"), params.len())?;
            if known("weight") > 0 {
                return Err(parse_err(0, "dense weights in a compressed model"));
            }
            let weights = match stage {
                Dtype::F32 => {
                    if known("wscale") + known("act") > 0 || m.input_quantized.is_some() {
                        return Err(parse_err(0, "quantization directives in a float model"));
                    }
                    let mut tensors = Vec::with_capacity(params.len());
                    for &li in &params {
                        let spec = &m.layers[li];
                        let e = take_entry(&m, "csc", li)?;
                        if e.dtype != Dtype::F32 {
                            return Err(parse_err(e.line, "csc dtype must match stage"));
                        }
                        check_count(format!("weights of layer {li}"), e.dense_len, spec.weight_count())?;
                        let (deltas, raw) = csc_block(&mut claims, e, 4)?;
                        tensors.push(CscTensor::from_parts(read_f32s(raw), deltas.to_vec(), e.dense_len, li)?);
                        let e = take_entry(&m, "bias", li)?;
                        biases.push(f32_block(&mut claims, e, "bias", li, spec.bias_count())?);
                    }
                    CompressedWeights::Float(tensors)
                }
                Dtype::I8 => {
                    let input_quantized = m
                        .input_quantized
                        .ok_or_else(|| parse_err(0, "int8 model without `input_quantized`"))?;
                    check_count("weight scales".into(), known("wscale"), params.len())?;
                    check_count("activation blocks".into(), known("act"), m.layers.len() + 1)?;
                    let mut tensors = Vec::with_capacity(params.len());
                    let mut weight_scales = Vec::with_capacity(params.len());
                    for &li in &params {
                        let spec = &m.layers[li];
                        let e = take_entry(&m, "csc", li)?;
                        if e.dtype != Dtype::I8 {
                            return Err(parse_err(e.line, "csc dtype must match stage"));
                        }
                        check_count(format!("weights of layer {li}"), e.dense_len, spec.weight_count())?;
                        let (deltas, raw) = csc_block(&mut claims, e, 1)?;
                        let values = raw.iter().map(|&b| b as i8).collect();
                        tensors.push(CscTensor::from_parts(values, deltas.to_vec(), e.dense_len, li)?);
                        let e = take_entry(&m, "bias", li)?;
                        biases.push(f32_block(&mut claims, e, "bias", li, spec.bias_count())?);
                        let e = take_entry(&m, "wscale", li)?;
                        weight_scales.push(f32_block(&mut claims, e, "wscale", li, 1)?[0]);
                    }
                    let mut activations = Vec::with_capacity(m.layers.len() + 1);
                    for b in 0..=m.layers.len() {
                        let e = take_entry(&m, "act", b)?;
                        let block = claims.take(e.line, e.offset, ACT_BLOCK)?;
                        let f = read_f32s(&block[..12]);
                        activations.push(AffineParams {
                            min: f[0],
                            max: f[1],
                            scale: f[2],
                            zero_point: block[12] as i8,
                        });
                    }
                    CompressedWeights::Int8 {
                        tensors,
                        quant: QuantParams {
                            weight_scales,
                            activations,
                            input_quantized,
                        },
                    }
                }
            };
            SdmModel::Compressed(CompressedModel::new(m.input, m.layers.clone(), biases, weights)?)
        }
        other => return Err(parse_err(1, format!("unknown kind `{other}`"))),
    };
    claims.finish()?;
    Ok(model)
}

pub fn load_model(bytes: &[u8]) -> Result<ModelGraph> {
    match load_sdm(bytes)? {
        SdmModel::Dense(m) => Ok(m),
        SdmModel::Compressed(_) => Err(parse_err(1, "expected a dense model, found a compressed one")),
    }
}

pub fn load_compressed(bytes: &[u8]) -> Result<CompressedModel> {
    match load_sdm(bytes)? {
        SdmModel::Compressed(m) => Ok(m),
        SdmModel::Dense(_) => Err(parse_err(1, "expected a compressed model, found a dense one")),
    }
}

pub fn read_sdm(path: &Path) -> Result<SdmModel> {
    load_sdm(&std::fs::read(path)?)
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(Error::PayloadTruncated {
            needed: at + 4,
            available: bytes.len(),
        })
}

fn idx_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0).map_err(|_| Error::BadMagic {
        expected: format!("{expected:#010x}"),
        found: format!("{:02x?}", bytes),
    })?;
    if found != expected {
        return Err(Error::BadMagic {
            expected: format!("{expected:#010x}"),
            found: format!("{found:#010x}"),
        });
    }
    Ok(())
}

/// Images from an IDX3 file, scaled to `[0, 1]`; returns (rows, cols, pixels).
pub fn load_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    idx_magic(bytes, IDX_IMAGES_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let need = 16 + n * rows * cols;
    if bytes.len() < need {
        return Err(Error::PayloadTruncated {
            needed: need,
            available: bytes.len(),
        });
    }
    let pixels = bytes[16..need].iter().map(|&b| b as f32 / 255.0).collect();
    Ok((rows, cols, pixels))
}

pub fn load_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    idx_magic(bytes, IDX_LABELS_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let need = 8 + n;
    if bytes.len() < need {
        return Err(Error::PayloadTruncated {
            needed: need,
            available: bytes.len(),
        });
    }
    Ok(bytes[8..need].iter().map(|&b| b as usize).collect())
}

/// Pairs an IDX image file with its label file.
pub fn load_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (rows, cols, pixels) = load_idx_images(images)?;
    let labels = load_idx_labels(labels)?;
    let n_images = pixels.len().checked_div(rows * cols).unwrap_or(0);
    if n_images != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{n_images} images but {} labels",
            labels.len()
        )));
    }
    Dataset::new([1, rows, cols], pixels, labels)
}

/// IDX3 bytes for single-channel images with values in `[0, 1]`.
pub fn save_idx_images(data: &Dataset) -> Vec<u8> {
    let [_, rows, cols] = data.sample_shape();
    let mut out = Vec::with_capacity(16 + data.len() * rows * cols);
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(data.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for i in 0..data.len() {
        out.extend(data.image(i).iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    out
}

pub fn save_idx_labels(data: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + data.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(data.len() as u32).to_be_bytes());
    out.extend(data.labels().iter().map(|&l| l as u8));
    out
}

pub const IDX_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const IDX_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const IDX_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const IDX_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Reads the four MNIST-named IDX files from `dir`.
pub fn load_idx_dir(dir: &Path) -> Result<Split> {
    let read = |name: &str| std::fs::read(dir.join(name));
    Ok(Split {
        train: load_idx(&read(IDX_TRAIN_IMAGES)?, &read(IDX_TRAIN_LABELS)?)?,
        test: load_idx(&read(IDX_TEST_IMAGES)?, &read(IDX_TEST_LABELS)?)?,
    })
}

/// Writes a split as the four MNIST-named IDX files.
pub fn save_idx_dir(split: &Split, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(IDX_TRAIN_IMAGES), save_idx_images(&split.train))?;
    std::fs::write(dir.join(IDX_TRAIN_LABELS), save_idx_labels(&split.train))?;
    std::fs::write(dir.join(IDX_TEST_IMAGES), save_idx_images(&split.test))?;
    std::fs::write(dir.join(IDX_TEST_LABELS), save_idx_labels(&split.test))?;
    Ok(())
}
