//! Layer primitives shared by the dense and sparse engines.
//!
//! All activations are flat CHW slices. Convolution is cross-correlation and
//! works one output channel at a time so the sparse path can reuse it with a
//! reconstructed kernel. Accumulation order is fixed (input channel, then
//! kernel row, then kernel column) so dense and sparse float results agree
//! bit for bit.

/// Geometry of one Conv2d application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn kernel_len(&self) -> usize {
        self.in_c * self.k_h * self.k_w
    }

    pub fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input coordinate for an output position and kernel tap, `None` in the padding.
    #[inline]
    fn tap(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k).checked_sub(self.padding)?;
        (pos < extent).then_some(pos)
    }
}

/// One output channel of a float convolution: `out[p] = sum(kernel * window) + bias`.
pub fn conv2d_channel_f32(input: &[f32], kernel: &[f32], bias: f32, g: &ConvGeom, out: &mut [f32]) {
    debug_assert_eq!(kernel.len(), g.kernel_len());
    debug_assert_eq!(out.len(), g.out_plane());
    let plane = g.in_h * g.in_w;
    for oh in 0..g.out_h {
        for ow in 0..g.out_w {
            let mut sum = 0.0f32;
            for ic in 0..g.in_c {
                let chan = &input[ic * plane..(ic + 1) * plane];
                let kchan = &kernel[ic * g.k_h * g.k_w..(ic + 1) * g.k_h * g.k_w];
                for kh in 0..g.k_h {
                    let Some(ih) = g.tap(oh, kh, g.in_h) else { continue };
                    for kw in 0..g.k_w {
                        let Some(iw) = g.tap(ow, kw, g.in_w) else { continue };
                        sum += chan[ih * g.in_w + iw] * kchan[kh * g.k_w + kw];
                    }
                }
            }
            out[oh * g.out_w + ow] = sum + bias;
        }
    }
}

/// One output channel of a convolution with int8 weights over an int8 input
/// with zero point `in_zero`; returns raw 32-bit accumulators.
pub fn conv2d_channel_i8(input: &[i8], in_zero: i32, kernel: &[i8], g: &ConvGeom, acc: &mut [i32]) {
    debug_assert_eq!(kernel.len(), g.kernel_len());
    let plane = g.in_h * g.in_w;
    for oh in 0..g.out_h {
        for ow in 0..g.out_w {
            let mut sum = 0i32;
            for ic in 0..g.in_c {
                let chan = &input[ic * plane..(ic + 1) * plane];
                let kchan = &kernel[ic * g.k_h * g.k_w..(ic + 1) * g.k_h * g.k_w];
                for kh in 0..g.k_h {
                    let Some(ih) = g.tap(oh, kh, g.in_h) else { continue };
                    for kw in 0..g.k_w {
                        let Some(iw) = g.tap(ow, kw, g.in_w) else { continue };
                        let w = kchan[kh * g.k_w + kw] as i32;
                        sum += w * (chan[ih * g.in_w + iw] as i32 - in_zero);
                    }
                }
            }
            acc[oh * g.out_w + ow] = sum;
        }
    }
}

/// One output channel of a convolution with int8 weights over a float input.
/// Returns the unscaled float sums (no bias).
pub fn conv2d_channel_i8w_f32x(input: &[f32], kernel: &[i8], g: &ConvGeom, acc: &mut [f32]) {
    debug_assert_eq!(kernel.len(), g.kernel_len());
    let plane = g.in_h * g.in_w;
    for oh in 0..g.out_h {
        for ow in 0..g.out_w {
            let mut sum = 0.0f32;
            for ic in 0..g.in_c {
                let chan = &input[ic * plane..(ic + 1) * plane];
                let kchan = &kernel[ic * g.k_h * g.k_w..(ic + 1) * g.k_h * g.k_w];
                for kh in 0..g.k_h {
                    let Some(ih) = g.tap(oh, kh, g.in_h) else { continue };
                    for kw in 0..g.k_w {
                        let Some(iw) = g.tap(ow, kw, g.in_w) else { continue };
                        sum += chan[ih * g.in_w + iw] * kchan[kh * g.k_w + kw] as f32;
                    }
                }
            }
            acc[oh * g.out_w + ow] = sum;
        }
    }
}

/// Max pooling without padding; works for any ordered element type.
pub fn maxpool2d<T: Copy + PartialOrd>(
    input: &[T],
    (c, h, w): (usize, usize, usize),
    kernel: usize,
    stride: usize,
    out: &mut [T],
) {
    let out_h = (h - kernel) / stride + 1;
    let out_w = (w - kernel) / stride + 1;
    debug_assert_eq!(out.len(), c * out_h * out_w);
    for ch in 0..c {
        let chan = &input[ch * h * w..(ch + 1) * h * w];
        for oh in 0..out_h {
            for ow in 0..out_w {
                let mut best = chan[oh * stride * w + ow * stride];
                for kh in 0..kernel {
                    for kw in 0..kernel {
                        let v = chan[(oh * stride + kh) * w + ow * stride + kw];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(ch * out_h + oh) * out_w + ow] = best;
            }
        }
    }
}

pub fn relu_f32(input: &[f32], out: &mut [f32]) {
    for (o, &v) in out.iter_mut().zip(input) {
        *o = if v > 0.0 { v } else { 0.0 };
    }
}

/// Quantized ReLU: clamp at the zero point.
pub fn relu_i8(input: &[i8], zero_point: i8, out: &mut [i8]) {
    for (o, &v) in out.iter_mut().zip(input) {
        *o = v.max(zero_point);
    }
}

/// Dense matrix-vector product with `(out, in)` row-major weights.
pub fn linear_f32(weights: &[f32], bias: &[f32], input: &[f32], out: &mut [f32]) {
    let r = input.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &weights[i * r..(i + 1) * r];
        let mut sum = 0.0f32;
        for (w, x) in row.iter().zip(input) {
            sum += w * x;
        }
        *o = sum + bias[i];
    }
}
