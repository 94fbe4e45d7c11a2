//! C source emission for compressed models.
//!
//! [`emit`] produces three files:
//!
//! - `nn_kernels.h`: the static kernel template (stream cursor, sparse FC and
//!   conv for float and int8, ReLU, max pooling, affine quantization)
//! - `main.h`: the model's constant arrays and affine parameters
//! - `main.c`: static ping-pong buffers, `nn_forward` calling the kernels
//!   layer by layer, and with an embedded test input a `main` that prints
//!   the logits and exits 0 when the top-1 class matches the expected one
//!
//! Output text depends only on the model and the plan.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::compressed::{CompressedModel, CompressedWeights};
use crate::csc::CscTensor;
use crate::error::{Error, Result};
use crate::model::{infer_shapes, ActShape, LayerSpec};
use crate::quantizer::AffineParams;
use crate::sparse::{activation_domains, buffer_plan, SparseEngine};

pub const KERNELS_HEADER: &str = include_str!("../templates/nn_kernels.h");

/// Bytes of `nn_cursor` state on a 32-bit target.
pub const CURSOR_STATE_BYTES: usize = 16;

/// Bytes of one emitted `nn_affine` (three floats and an int8).
pub const AFFINE_BYTES: usize = 13;

const C_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum", "extern", "float",
    "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return", "short", "signed", "sizeof",
    "static", "struct", "switch", "typedef", "union", "unsigned", "void", "volatile", "while", "_Bool", "_Complex",
    "_Imaginary", "main", "input", "logits",
];

/// C symbol names for one parametric layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerSymbols {
    pub layer: usize,
    pub weights: String,
    pub deltas: String,
    pub bias: String,
    /// Weight scale (int8 models only).
    pub scale: String,
}

/// A sample compiled into the program together with the engine's logits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddedInput {
    pub input: Vec<f32>,
    pub expected_logits: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmitPlan {
    pub symbols: Vec<LayerSymbols>,
    /// Affine parameter symbol per layer boundary (int8 models only).
    pub act_symbols: Vec<String>,
    /// Elements per ping-pong buffer.
    pub activation_capacity: usize,
    /// Elements of the kernel scratch buffer.
    pub scratch_capacity: usize,
    /// Elements per float prefix buffer (int8 models with float input).
    pub float_prefix_capacity: usize,
    pub quantized: bool,
    pub embedded: Option<EmbeddedInput>,
}

impl EmitPlan {
    /// Default names (`weights_L{i}`, `deltas_L{i}`, `bias_L{i}`,
    /// `scale_L{i}`, `act_B{b}`) and the engine's buffer sizes.
    pub fn for_model(model: &CompressedModel) -> Self {
        let plan = buffer_plan(model);
        Self {
            symbols: model
                .parametric_layers()
                .into_iter()
                .map(|i| LayerSymbols {
                    layer: i,
                    weights: format!("weights_L{i}"),
                    deltas: format!("deltas_L{i}"),
                    bias: format!("bias_L{i}"),
                    scale: format!("scale_L{i}"),
                })
                .collect(),
            act_symbols: if model.is_quantized() {
                (0..=model.layers().len()).map(|b| format!("act_B{b}")).collect()
            } else {
                Vec::new()
            },
            activation_capacity: plan.activation,
            scratch_capacity: plan.scratch,
            float_prefix_capacity: plan.float_prefix,
            quantized: model.is_quantized(),
            embedded: None,
        }
    }

    /// Embeds `input` and the sparse engine's logits for it.
    pub fn with_input(mut self, model: &CompressedModel, input: &[f32]) -> Result<Self> {
        let expected_logits = SparseEngine::new(model).run(input)?;
        self.embedded = Some(EmbeddedInput {
            input: input.to_vec(),
            expected_logits,
        });
        Ok(self)
    }

    fn validate(&self, model: &CompressedModel) -> Result<()> {
        if self.quantized != model.is_quantized() {
            return Err(Error::InvalidConfig(format!(
                "plan is for a {} model but the model is {}",
                mode_name(self.quantized),
                mode_name(model.is_quantized())
            )));
        }
        let params = model.parametric_layers();
        if self.symbols.iter().map(|s| s.layer).ne(params.iter().copied()) {
            return Err(Error::InvalidConfig("plan symbols do not follow the parametric layers".into()));
        }
        let want_acts = if model.is_quantized() { model.layers().len() + 1 } else { 0 };
        if self.act_symbols.len() != want_acts {
            return Err(Error::CountMismatch {
                what: "activation symbols".into(),
                declared: self.act_symbols.len(),
                expected: want_acts,
            });
        }
        let mut names: Vec<&str> = Vec::new();
        for s in &self.symbols {
            names.extend([s.weights.as_str(), s.deltas.as_str(), s.bias.as_str()]);
            if self.quantized {
                names.push(&s.scale);
            }
        }
        names.extend(self.act_symbols.iter().map(String::as_str));
        let mut seen = HashSet::new();
        for name in names {
            let valid = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !valid {
                return Err(Error::InvalidConfig(format!("`{name}` is not a C identifier")));
            }
            if C_KEYWORDS.contains(&name) || name.starts_with("nn_") || name.starts_with("NN_") {
                return Err(Error::IdentifierCollision(format!("`{name}` is reserved")));
            }
            if !seen.insert(name) {
                return Err(Error::IdentifierCollision(format!("`{name}` is used twice")));
            }
        }
        let need = buffer_plan(model);
        for (what, needed, planned) in [
            ("activation buffer", need.activation, self.activation_capacity),
            ("kernel scratch", need.scratch, self.scratch_capacity),
            ("float prefix buffer", need.float_prefix, self.float_prefix_capacity),
        ] {
            if planned < needed {
                return Err(Error::BufferPlanTooSmall {
                    what: what.into(),
                    needed,
                    planned,
                });
            }
        }
        if let Some(e) = &self.embedded {
            let shapes = infer_shapes(model.input_shape(), model.layers())?;
            let (n_in, n_out) = (shapes[0].numel(), shapes.last().expect("nonempty").numel());
            if e.input.len() != n_in || e.expected_logits.len() != n_out {
                return Err(Error::DimensionMismatch(format!(
                    "embedded input {} / logits {} for a model with {n_in} inputs and {n_out} outputs",
                    e.input.len(),
                    e.expected_logits.len()
                )));
            }
        }
        Ok(())
    }
}

fn mode_name(quantized: bool) -> &'static str {
    if quantized {
        "int8"
    } else {
        "float"
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmittedFile {
    pub name: &'static str,
    pub contents: String,
}

/// Source-level memory accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Footprint {
    /// Stored stream bytes (values plus deltas, padding entries included).
    pub weight_bytes: usize,
    pub bias_bytes: usize,
    /// Weight scales and affine parameters.
    pub quant_bytes: usize,
    /// Embedded test input and expected logits.
    pub input_bytes: usize,
    pub rom_bytes: usize,
    /// Both ping-pong buffers.
    pub activation_bytes: usize,
    pub float_prefix_bytes: usize,
    pub scratch_bytes: usize,
    pub cursor_bytes: usize,
    pub ram_bytes: usize,
}

/// ROM and RAM for the default plan (no embedded input).
pub fn estimate_footprint(model: &CompressedModel) -> Footprint {
    footprint(model, &EmitPlan::for_model(model))
}

pub fn footprint(model: &CompressedModel, plan: &EmitPlan) -> Footprint {
    let weight_bytes = model.stream_stats().iter().map(|s| s.bytes).sum();
    let bias_bytes = 4 * model.biases().iter().map(Vec::len).sum::<usize>();
    let quant_bytes = match model.quant() {
        Some(q) => 4 * q.weight_scales.len() + AFFINE_BYTES * q.activations.len(),
        None => 0,
    };
    let input_bytes = plan
        .embedded
        .as_ref()
        .map_or(0, |e| 4 * (e.input.len() + e.expected_logits.len()));
    let width = if model.is_quantized() { 1 } else { 4 };
    let activation_bytes = 2 * plan.activation_capacity * width;
    let float_prefix_bytes = 2 * plan.float_prefix_capacity * 4;
    let scratch_bytes = plan.scratch_capacity * width;
    Footprint {
        weight_bytes,
        bias_bytes,
        quant_bytes,
        input_bytes,
        rom_bytes: weight_bytes + bias_bytes + quant_bytes + input_bytes,
        activation_bytes,
        float_prefix_bytes,
        scratch_bytes,
        cursor_bytes: CURSOR_STATE_BYTES,
        ram_bytes: activation_bytes + float_prefix_bytes + scratch_bytes + CURSOR_STATE_BYTES,
    }
}

/// C literal for an `f32` that parses back to the same value.
fn c_float(v: f32) -> String {
    format!("{v:?}f")
}

fn check_finite(what: &str, values: &[f32]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(format!("{what} contains a non-finite value")));
    }
    Ok(())
}

fn write_array(out: &mut String, ctype: &str, name: &str, items: Vec<String>) {
    writeln!(out, "static const {ctype} {name}[{}] = {{", items.len()).unwrap();
    for chunk in items.chunks(12) {
        writeln!(out, "    {},", chunk.join(", ")).unwrap();
    }
    out.push_str("};\n");
}

fn describe(spec: &LayerSpec) -> String {
    match *spec {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
        } => format!("conv2d {in_channels}->{out_channels} {kernel_h}x{kernel_w} stride {stride} pad {padding}"),
        LayerSpec::MaxPool2d { kernel, stride } => format!("maxpool2d {kernel} stride {stride}"),
        LayerSpec::Linear {
            in_features,
            out_features,
        } => format!("linear {in_features}->{out_features}"),
        LayerSpec::Flatten => "flatten".into(),
        LayerSpec::Relu => "relu".into(),
    }
}

/// Stream data for one layer, in whichever value type the model uses.
enum Stream<'a> {
    F32(&'a CscTensor<f32>),
    I8(&'a CscTensor<i8>),
}

impl Stream<'_> {
    fn entries(&self) -> usize {
        match self {
            Stream::F32(t) => t.entries(),
            Stream::I8(t) => t.entries(),
        }
    }

    fn deltas(&self) -> &[u8] {
        match self {
            Stream::F32(t) => t.index_deltas(),
            Stream::I8(t) => t.index_deltas(),
        }
    }
}

fn emit_header(model: &CompressedModel, plan: &EmitPlan, shapes: &[ActShape]) -> Result<String> {
    let mut h = String::new();
    h.push_str("/* Generated model data. Do not edit. */\n");
    h.push_str("#ifndef NN_MAIN_H\n#define NN_MAIN_H\n\n#include \"nn_kernels.h\"\n\n");
    let n_in = shapes[0].numel();
    let n_out = shapes.last().expect("nonempty").numel();
    writeln!(h, "#define NN_INPUT_LEN {n_in}u").unwrap();
    writeln!(h, "#define NN_OUTPUT_LEN {n_out}u").unwrap();
    writeln!(h, "#define NN_ACT_LEN {}u", plan.activation_capacity).unwrap();
    writeln!(h, "#define NN_SCRATCH_LEN {}u", plan.scratch_capacity).unwrap();
    writeln!(h, "#define NN_FLOAT_PREFIX_LEN {}u", plan.float_prefix_capacity).unwrap();
    writeln!(h, "#define NN_QUANTIZED {}", plan.quantized as u8).unwrap();
    if let Some(q) = model.quant() {
        writeln!(h, "#define NN_INPUT_QUANTIZED {}", q.input_quantized as u8).unwrap();
    }
    if plan.embedded.is_some() {
        h.push_str("#define NN_HAS_TEST_INPUT 1\n");
    }
    h.push('\n');
    h.push_str("void nn_forward(const float *input, float *logits);\n");

    let layers = model.layers();
    for (k, sym) in plan.symbols.iter().enumerate() {
        let spec = &layers[sym.layer];
        let stream = stream_at(model, k);
        writeln!(
            h,
            "\n/* L{} {}: {} weights, {} stored entries */",
            sym.layer,
            describe(spec),
            spec.weight_count(),
            stream.entries()
        )
        .unwrap();
        writeln!(h, "#define NN_L{}_ENTRIES {}u", sym.layer, stream.entries()).unwrap();
        if stream.entries() > 0 {
            write_array(&mut h, "uint8_t", &sym.deltas, stream.deltas().iter().map(u8::to_string).collect());
            match stream {
                Stream::F32(t) => {
                    check_finite("weights", t.values())?;
                    write_array(&mut h, "float", &sym.weights, t.values().iter().map(|&v| c_float(v)).collect());
                }
                Stream::I8(t) => write_array(&mut h, "int8_t", &sym.weights, t.values().iter().map(i8::to_string).collect()),
            }
        }
        let bias = &model.biases()[k];
        check_finite("bias", bias)?;
        write_array(&mut h, "float", &sym.bias, bias.iter().map(|&v| c_float(v)).collect());
        if let Some(q) = model.quant() {
            writeln!(h, "static const float {} = {};", sym.scale, c_float(q.weight_scales[k])).unwrap();
        }
    }

    if let Some(q) = model.quant() {
        h.push_str("\n/* affine parameters per layer boundary: min, max, scale, zero point */\n");
        for (name, a) in plan.act_symbols.iter().zip(&q.activations) {
            check_finite("activation parameters", &[a.min, a.max, a.scale])?;
            writeln!(h, "static const nn_affine {name} = {};", affine_literal(a)).unwrap();
        }
    }

    if let Some(e) = &plan.embedded {
        check_finite("embedded input", &e.input)?;
        check_finite("expected logits", &e.expected_logits)?;
        h.push('\n');
        write_array(&mut h, "float", "nn_test_input", e.input.iter().map(|&v| c_float(v)).collect());
        write_array(&mut h, "float", "nn_expected_logits", e.expected_logits.iter().map(|&v| c_float(v)).collect());
    }
    h.push_str("\n#endif /* NN_MAIN_H */\n");
    Ok(h)
}

fn stream_at(model: &CompressedModel, k: usize) -> Stream<'_> {
    match model.weights() {
        CompressedWeights::Float(t) => Stream::F32(&t[k]),
        CompressedWeights::Int8 { tensors, .. } => Stream::I8(&tensors[k]),
    }
}

/// Where an activation currently lives in the generated code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Buf {
    Input,
    Ping,
    Pong,
    FPing,
    FPong,
    Logits,
}

impl Buf {
    fn name(self) -> &'static str {
        match self {
            Buf::Input => "input",
            Buf::Ping => "nn_ping",
            Buf::Pong => "nn_pong",
            Buf::FPing => "nn_fping",
            Buf::FPong => "nn_fpong",
            Buf::Logits => "logits",
        }
    }

    fn other(self) -> Buf {
        match self {
            Buf::Ping => Buf::Pong,
            Buf::Pong => Buf::Ping,
            Buf::Input | Buf::FPong => Buf::FPing,
            Buf::FPing => Buf::FPong,
            Buf::Logits => unreachable!("logits are never an input"),
        }
    }
}

fn geom_literal(spec: &LayerSpec, ins: ActShape, outs: ActShape) -> String {
    let LayerSpec::Conv2d {
        kernel_h,
        kernel_w,
        stride,
        padding,
        ..
    } = *spec
    else {
        unreachable!()
    };
    let (c, h, w) = ins.spatial().expect("spatial");
    let (_, oh, ow) = outs.spatial().expect("spatial");
    format!("&(nn_conv_geom){{{c}, {h}, {w}, {kernel_h}, {kernel_w}, {stride}, {padding}, {oh}, {ow}}}")
}

fn stream_args(sym: &LayerSymbols, entries: usize) -> String {
    if entries == 0 {
        format!("0, 0, NN_L{}_ENTRIES", sym.layer)
    } else {
        format!("{}, {}, NN_L{}_ENTRIES", sym.weights, sym.deltas, sym.layer)
    }
}

fn emit_float_forward(body: &mut String, model: &CompressedModel, plan: &EmitPlan, shapes: &[ActShape]) {
    let layers = model.layers();
    body.push_str("    for (k = 0; k < NN_INPUT_LEN; k++) {\n        nn_ping[k] = input[k];\n    }\n");
    let mut cur = Buf::Ping;
    let mut p = 0;
    for (li, spec) in layers.iter().enumerate() {
        let (ins, outs) = (shapes[li], shapes[li + 1]);
        writeln!(body, "    /* L{li} {} */", describe(spec)).unwrap();
        let y = cur.other();
        let (x, yn) = (cur.name(), y.name());
        match *spec {
            LayerSpec::Linear {
                in_features,
                out_features,
            } => {
                let sym = &plan.symbols[p];
                let args = stream_args(sym, stream_at(model, p).entries());
                writeln!(body, "    nn_fc_f32({args}, {x}, {in_features}u, {out_features}u, {}, {yn});", sym.bias).unwrap();
                p += 1;
            }
            LayerSpec::Conv2d { out_channels, .. } => {
                let sym = &plan.symbols[p];
                let args = stream_args(sym, stream_at(model, p).entries());
                writeln!(
                    body,
                    "    nn_conv_f32({args}, {x}, {}, {out_channels}u, {}, nn_scratch, {yn});",
                    geom_literal(spec, ins, outs),
                    sym.bias
                )
                .unwrap();
                p += 1;
            }
            LayerSpec::Relu => writeln!(body, "    nn_relu_f32({x}, {}u, {yn});", ins.numel()).unwrap(),
            LayerSpec::MaxPool2d { kernel, stride } => {
                let (c, h, w) = ins.spatial().expect("spatial");
                writeln!(body, "    nn_maxpool_f32({x}, {c}, {h}, {w}, {kernel}, {stride}, {yn});").unwrap();
            }
            LayerSpec::Flatten => {
                body.push_str("    /* layout unchanged */\n");
                continue;
            }
        }
        cur = y;
    }
    writeln!(
        body,
        "    for (k = 0; k < NN_OUTPUT_LEN; k++) {{\n        logits[k] = {}[k];\n    }}",
        cur.name()
    )
    .unwrap();
}

fn emit_int8_forward(body: &mut String, model: &CompressedModel, plan: &EmitPlan, shapes: &[ActShape]) {
    let quant = model.quant().expect("int8 model");
    let layers = model.layers();
    let domains = activation_domains(layers);
    let act = |b: usize| format!("&{}", plan.act_symbols[b]);
    // `None` while the activation is still float
    let mut domain: Option<usize>;
    let mut cur;
    if quant.input_quantized {
        writeln!(
            body,
            "    for (k = 0; k < NN_INPUT_LEN; k++) {{\n        nn_ping[k] = nn_quantize(input[k], {});\n    }}",
            act(0)
        )
        .unwrap();
        cur = Buf::Ping;
        domain = Some(0);
    } else {
        cur = Buf::Input;
        domain = None;
    }
    let mut p = 0;
    let n_layers = layers.len();
    for (li, spec) in layers.iter().enumerate() {
        let (ins, outs) = (shapes[li], shapes[li + 1]);
        writeln!(body, "    /* L{li} {} */", describe(spec)).unwrap();
        let x = cur.name();
        if spec.is_parametric() {
            let sym = &plan.symbols[p];
            let args = stream_args(sym, stream_at(model, p).entries());
            let is_last = li + 1 == n_layers;
            let (out_arg, yq, yf, next) = if is_last {
                ("0".to_string(), "0", "logits", Buf::Logits)
            } else {
                let y = match cur {
                    Buf::Ping => Buf::Pong,
                    _ => Buf::Ping,
                };
                (act(domains[li + 1]), y.name(), "0", y)
            };
            let (shape_args, fn_suffix) = match *spec {
                LayerSpec::Linear {
                    in_features,
                    out_features,
                } => (format!("{in_features}u, {out_features}u"), "fc"),
                LayerSpec::Conv2d { out_channels, .. } => {
                    (format!("{}, {out_channels}u", geom_literal(spec, ins, outs)), "conv")
                }
                _ => unreachable!(),
            };
            let scratch = if fn_suffix == "conv" { "nn_scratch, " } else { "" };
            match domain {
                Some(d) => {
                    let a = quant.activations[d];
                    let mult = quant.weight_scales[p] * a.scale;
                    writeln!(
                        body,
                        "    nn_{fn_suffix}_i8({args}, {x}, {}, {shape_args}, {}, {}, {out_arg}, {scratch}{yq}, {yf});",
                        a.zero_point,
                        c_float(mult),
                        sym.bias
                    )
                    .unwrap();
                }
                None => {
                    writeln!(
                        body,
                        "    nn_{fn_suffix}_i8w_f32x({args}, {x}, {shape_args}, {}, {}, {out_arg}, {scratch}{yq}, {yf});",
                        sym.scale, sym.bias
                    )
                    .unwrap();
                }
            }
            p += 1;
            cur = next;
            domain = Some(domains[li + 1]);
            continue;
        }
        if let LayerSpec::Flatten = spec {
            body.push_str("    /* layout unchanged */\n");
            continue;
        }
        let y = cur.other();
        let yn = y.name();
        match (domain, spec) {
            (None, LayerSpec::Relu) => writeln!(body, "    nn_relu_f32({x}, {}u, {yn});", ins.numel()).unwrap(),
            (Some(d), LayerSpec::Relu) => writeln!(
                body,
                "    nn_relu_i8({x}, {}u, {}, {yn});",
                ins.numel(),
                quant.activations[d].zero_point
            )
            .unwrap(),
            (_, LayerSpec::MaxPool2d { kernel, stride }) => {
                let (c, h, w) = ins.spatial().expect("spatial");
                let f = if domain.is_some() { "i8" } else { "f32" };
                writeln!(body, "    nn_maxpool_{f}({x}, {c}, {h}, {w}, {kernel}, {stride}, {yn});").unwrap();
            }
            _ => unreachable!(),
        }
        cur = y;
    }
    match (cur, domain) {
        (Buf::Logits, _) => {}
        (_, Some(d)) => writeln!(
            body,
            "    for (k = 0; k < NN_OUTPUT_LEN; k++) {{\n        logits[k] = nn_dequantize({}[k], {});\n    }}",
            cur.name(),
            act(d)
        )
        .unwrap(),
        (_, None) => writeln!(
            body,
            "    for (k = 0; k < NN_OUTPUT_LEN; k++) {{\n        logits[k] = {}[k];\n    }}",
            cur.name()
        )
        .unwrap(),
    }
}

fn emit_main(model: &CompressedModel, plan: &EmitPlan, shapes: &[ActShape]) -> String {
    let mut c = String::new();
    c.push_str("/* Generated inference entry point. Do not edit. */\n");
    c.push_str("#include \"main.h\"\n");
    if plan.embedded.is_some() {
        c.push_str("#include <stdio.h>\n");
    }
    c.push('\n');
    let act_type = if plan.quantized { "int8_t" } else { "float" };
    if plan.activation_capacity > 0 {
        writeln!(c, "static {act_type} nn_ping[NN_ACT_LEN];").unwrap();
        writeln!(c, "static {act_type} nn_pong[NN_ACT_LEN];").unwrap();
    }
    if plan.scratch_capacity > 0 {
        writeln!(c, "static {act_type} nn_scratch[NN_SCRATCH_LEN];").unwrap();
    }
    if plan.float_prefix_capacity > 0 {
        c.push_str("static float nn_fping[NN_FLOAT_PREFIX_LEN];\n");
        c.push_str("static float nn_fpong[NN_FLOAT_PREFIX_LEN];\n");
    }
    c.push_str("\nvoid nn_forward(const float *input, float *logits)\n{\n");
    let mut body = String::new();
    if plan.quantized {
        emit_int8_forward(&mut body, model, plan, shapes);
    } else {
        emit_float_forward(&mut body, model, plan, shapes);
    }
    if body.contains("(k = 0;") {
        c.push_str("    uint32_t k;\n");
    }
    c.push_str(&body);
    c.push_str("}\n");
    if plan.embedded.is_some() {
        c.push_str(
            r#"
static uint32_t nn_argmax(const float *v, uint32_t n)
{
    uint32_t k, best = 0;
    for (k = 1; k < n; k++) {
        if (v[k] > v[best]) {
            best = k;
        }
    }
    return best;
}

int main(void)
{
    float logits[NN_OUTPUT_LEN];
    uint32_t k;
    nn_forward(nn_test_input, logits);
    for (k = 0; k < NN_OUTPUT_LEN; k++) {
        printf("%.9g\n", (double)logits[k]);
    }
    return nn_argmax(logits, NN_OUTPUT_LEN) == nn_argmax(nn_expected_logits, NN_OUTPUT_LEN) ? 0 : 1;
}
"#,
        );
    }
    c
}

/// Emits `main.h`, `main.c` and `nn_kernels.h`.
pub fn emit(model: &CompressedModel, plan: &EmitPlan) -> Result<Vec<EmittedFile>> {
    model.validate()?;
    plan.validate(model)?;
    let shapes = infer_shapes(model.input_shape(), model.layers())?;
    Ok(vec![
        EmittedFile {
            name: "main.h",
            contents: emit_header(model, plan, &shapes)?,
        },
        EmittedFile {
            name: "main.c",
            contents: emit_main(model, plan, &shapes),
        },
        EmittedFile {
            name: "nn_kernels.h",
            contents: KERNELS_HEADER.to_string(),
        },
    ])
}

pub fn write_files(files: &[EmittedFile], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in files {
        std::fs::write(dir.join(f.name), &f.contents)?;
    }
    Ok(())
}

/// Expected-logits file: one shortest round-trip decimal per line.
pub fn logits_text(logits: &[f32]) -> String {
    logits.iter().map(|v| format!("{v}\n")).collect()
}

/// Parses the program's printed logits.
pub fn parse_logits(text: &str) -> Result<Vec<f32>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f32>()
                .map_err(|e| Error::InvalidConfig(format!("bad logit `{l}`: {e}")))
        })
        .collect()
}

/// Affine parameters as they appear in the emitted header.
pub fn affine_literal(a: &AffineParams) -> String {
    format!("{{{}, {}, {}, {}}}", c_float(a.min), c_float(a.max), c_float(a.scale), a.zero_point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::TensorF32;
    use crate::{ModelGraph, QuantParams};

    fn tiny_float() -> CompressedModel {
        let layers = vec![LayerSpec::Flatten, LayerSpec::linear(4, 3), LayerSpec::Relu, LayerSpec::linear(3, 2)];
        let m = ModelGraph::new(
            [1, 2, 2],
            layers,
            vec![
                TensorF32::new(vec![3, 4], vec![0.5, 0.0, -1.0, 0.0, 0.0, 0.25, 0.0, 0.0, 1.5, 0.0, 0.0, -0.75]).unwrap(),
                TensorF32::new(vec![2, 3], vec![1.0, 0.0, -2.0, 0.0, 0.5, 0.0]).unwrap(),
            ],
            vec![vec![0.1, -0.2, 0.0], vec![0.0, 0.3]],
        )
        .unwrap();
        CompressedModel::from_float(&m).unwrap()
    }

    #[test]
    fn float_literals_round_trip() {
        for v in [0.1f32, -1.0, 1e-8, 3.4028235e38, 1.1754944e-38, -0.0] {
            let s = c_float(v);
            assert!(s.ends_with('f'));
            assert_eq!(s.trim_end_matches('f').parse::<f32>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn emission_is_deterministic() {
        let m = tiny_float();
        let plan = EmitPlan::for_model(&m);
        assert_eq!(emit(&m, &plan).unwrap(), emit(&m, &plan).unwrap());
    }

    #[test]
    fn duplicate_symbol_rejected() {
        let m = tiny_float();
        let mut plan = EmitPlan::for_model(&m);
        plan.symbols[1].bias = plan.symbols[0].bias.clone();
        assert!(matches!(emit(&m, &plan), Err(Error::IdentifierCollision(_))));
        let mut plan = EmitPlan::for_model(&m);
        plan.symbols[0].weights = "nn_ping".into();
        assert!(matches!(emit(&m, &plan), Err(Error::IdentifierCollision(_))));
        let mut plan = EmitPlan::for_model(&m);
        plan.symbols[0].weights = "2bad".into();
        assert!(matches!(emit(&m, &plan), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn small_buffers_rejected() {
        let m = tiny_float();
        let mut plan = EmitPlan::for_model(&m);
        plan.activation_capacity -= 1;
        assert!(matches!(emit(&m, &plan), Err(Error::BufferPlanTooSmall { .. })));
    }

    #[test]
    fn float_ram_is_four_times_int8() {
        let m = tiny_float();
        let dense = m.to_dense().unwrap();
        let codes: Vec<Vec<i8>> = dense
            .weights()
            .iter()
            .map(|w| crate::quantizer::quantize_layer(w.data()).0)
            .collect();
        let q = QuantParams {
            weight_scales: vec![0.01; 2],
            activations: vec![AffineParams::from_range(0.0, 1.0); 5],
            input_quantized: true,
        };
        let qm = CompressedModel::from_quantized(&dense, &codes, q).unwrap();
        let (f, i) = (estimate_footprint(&m), estimate_footprint(&qm));
        assert_eq!(f.activation_bytes, 4 * i.activation_bytes);
    }

    #[test]
    fn rom_counts_streams_biases_and_scales() {
        let m = tiny_float();
        let fp = estimate_footprint(&m);
        let entries: usize = m.stream_stats().iter().map(|s| s.entries).sum();
        assert_eq!(fp.weight_bytes, 5 * entries);
        assert_eq!(fp.bias_bytes, 4 * 5);
        assert_eq!(fp.quant_bytes, 0);
    }

    #[test]
    fn empty_stream_passes_null() {
        let layers = vec![LayerSpec::Flatten, LayerSpec::linear(4, 2)];
        let m = CompressedModel::from_float(&ModelGraph::zeros([1, 2, 2], layers).unwrap()).unwrap();
        let files = emit(&m, &EmitPlan::for_model(&m)).unwrap();
        assert!(!files[0].contents.contains("weights_L1["));
        assert!(files[1].contents.contains("nn_fc_f32(0, 0, NN_L1_ENTRIES"));
    }

    #[test]
    fn logits_text_round_trip() {
        let v = vec![0.1f32, -3.25, 1e-7];
        assert_eq!(parse_logits(&logits_text(&v)).unwrap(), v);
    }
}
