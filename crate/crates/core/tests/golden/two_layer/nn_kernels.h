/*
 * Sparse inference kernels for generated models.
 *
 * Weights arrive as (values, deltas, n) streams: deltas[0] is the absolute
 * flat index of the first entry, every later delta is the gap to the
 * previous one. Each kernel walks its stream exactly once.
 *
 * Strict C99, no dynamic allocation, only <stdint.h>.
 */
#ifndef NN_KERNELS_H
#define NN_KERNELS_H

#include <stdint.h>

typedef struct {
    float min;
    float max;
    float scale;
    int8_t zero_point;
} nn_affine;

typedef struct {
    int32_t in_c, in_h, in_w;
    int32_t k_h, k_w;
    int32_t stride, padding;
    int32_t out_h, out_w;
} nn_conv_geom;

typedef struct {
    const uint8_t *deltas;
    uint32_t n;
    uint32_t s;
    uint32_t pos;
} nn_cursor;

static inline void nn_cursor_init(nn_cursor *c, const uint8_t *deltas, uint32_t n)
{
    c->deltas = deltas;
    c->n = n;
    c->s = 0;
    c->pos = n ? deltas[0] : UINT32_MAX;
}

/* Returns 1 and leaves c->s on the entry when the stream stores idx. */
static inline int nn_cursor_take(nn_cursor *c, uint32_t idx, uint32_t *entry)
{
    if (c->pos != idx) {
        return 0;
    }
    *entry = c->s;
    c->s++;
    c->pos = c->s < c->n ? c->pos + c->deltas[c->s] : UINT32_MAX;
    return 1;
}

/* Round half away from zero; r must lie within +-32768. */
static inline int32_t nn_round(float r)
{
    int32_t t = (int32_t)r;
    float f = r - (float)t;
    if (f >= 0.5f) {
        t += 1;
    } else if (f <= -0.5f) {
        t -= 1;
    }
    return t;
}

static inline int8_t nn_quantize(float v, const nn_affine *p)
{
    float c = v < p->min ? p->min : (v > p->max ? p->max : v);
    float r = c / p->scale;
    int32_t q;
    if (r < -32768.0f) {
        r = -32768.0f;
    } else if (r > 32768.0f) {
        r = 32768.0f;
    }
    q = nn_round(r) + (int32_t)p->zero_point;
    if (q < -128) {
        q = -128;
    } else if (q > 127) {
        q = 127;
    }
    return (int8_t)q;
}

static inline float nn_dequantize(int8_t q, const nn_affine *p)
{
    return (float)((int32_t)q - (int32_t)p->zero_point) * p->scale;
}

/* Input coordinate for an output index and kernel tap, -1 inside padding. */
static inline int32_t nn_tap(int32_t o, int32_t k, int32_t stride, int32_t padding, int32_t extent)
{
    int32_t pos = o * stride + k - padding;
    return (pos < 0 || pos >= extent) ? -1 : pos;
}

/* ---- float32 ---- */

static inline void nn_fc_f32(const float *values, const uint8_t *deltas, uint32_t n,
                             const float *x, uint32_t r, uint32_t c,
                             const float *bias, float *y)
{
    nn_cursor cur;
    uint32_t i, j, e;
    nn_cursor_init(&cur, deltas, n);
    for (i = 0; i < c; i++) {
        float sum = 0.0f;
        for (j = 0; j < r; j++) {
            if (nn_cursor_take(&cur, i * r + j, &e)) {
                sum += values[e] * x[j];
            }
        }
        y[i] = sum + bias[i];
    }
}

static inline void nn_conv_channel_f32(const float *x, const float *kernel, float bias,
                                       const nn_conv_geom *g, float *y)
{
    int32_t oh, ow, ic, kh, kw;
    int32_t plane = g->in_h * g->in_w;
    for (oh = 0; oh < g->out_h; oh++) {
        for (ow = 0; ow < g->out_w; ow++) {
            float sum = 0.0f;
            for (ic = 0; ic < g->in_c; ic++) {
                const float *chan = x + ic * plane;
                const float *kchan = kernel + ic * g->k_h * g->k_w;
                for (kh = 0; kh < g->k_h; kh++) {
                    int32_t ih = nn_tap(oh, kh, g->stride, g->padding, g->in_h);
                    if (ih < 0) {
                        continue;
                    }
                    for (kw = 0; kw < g->k_w; kw++) {
                        int32_t iw = nn_tap(ow, kw, g->stride, g->padding, g->in_w);
                        if (iw < 0) {
                            continue;
                        }
                        sum += chan[ih * g->in_w + iw] * kchan[kh * g->k_w + kw];
                    }
                }
            }
            y[oh * g->out_w + ow] = sum + bias;
        }
    }
}

static inline void nn_conv_f32(const float *values, const uint8_t *deltas, uint32_t n,
                               const float *x, const nn_conv_geom *g, uint32_t out_c,
                               const float *bias, float *scratch, float *y)
{
    nn_cursor cur;
    uint32_t i, j, e;
    uint32_t ws = (uint32_t)(g->in_c * g->k_h * g->k_w);
    uint32_t plane = (uint32_t)(g->out_h * g->out_w);
    nn_cursor_init(&cur, deltas, n);
    for (i = 0; i < out_c; i++) {
        for (j = 0; j < ws; j++) {
            scratch[j] = nn_cursor_take(&cur, i * ws + j, &e) ? values[e] : 0.0f;
        }
        nn_conv_channel_f32(x, scratch, bias[i], g, y + i * plane);
    }
}

static inline void nn_relu_f32(const float *x, uint32_t len, float *y)
{
    uint32_t i;
    for (i = 0; i < len; i++) {
        y[i] = x[i] > 0.0f ? x[i] : 0.0f;
    }
}

static inline void nn_maxpool_f32(const float *x, int32_t c, int32_t h, int32_t w,
                                  int32_t k, int32_t stride, float *y)
{
    int32_t ch, oh, ow, kh, kw;
    int32_t out_h = (h - k) / stride + 1;
    int32_t out_w = (w - k) / stride + 1;
    for (ch = 0; ch < c; ch++) {
        const float *chan = x + ch * h * w;
        for (oh = 0; oh < out_h; oh++) {
            for (ow = 0; ow < out_w; ow++) {
                float best = chan[oh * stride * w + ow * stride];
                for (kh = 0; kh < k; kh++) {
                    for (kw = 0; kw < k; kw++) {
                        float v = chan[(oh * stride + kh) * w + ow * stride + kw];
                        if (v > best) {
                            best = v;
                        }
                    }
                }
                y[(ch * out_h + oh) * out_w + ow] = best;
            }
        }
    }
}

/* ---- int8 ----
 *
 * Outputs are acc * mult + bias, then quantized with `out`. When `out` is
 * NULL the float value is written to `yf` instead (final logits).
 */

static inline void nn_emit(float v, const nn_affine *out, uint32_t k, int8_t *yq, float *yf)
{
    if (out) {
        yq[k] = nn_quantize(v, out);
    } else {
        yf[k] = v;
    }
}

static inline void nn_fc_i8(const int8_t *values, const uint8_t *deltas, uint32_t n,
                            const int8_t *x, int32_t zx, uint32_t r, uint32_t c,
                            float mult, const float *bias, const nn_affine *out,
                            int8_t *yq, float *yf)
{
    nn_cursor cur;
    uint32_t i, j, e;
    nn_cursor_init(&cur, deltas, n);
    for (i = 0; i < c; i++) {
        int32_t acc = 0;
        for (j = 0; j < r; j++) {
            if (nn_cursor_take(&cur, i * r + j, &e)) {
                acc += (int32_t)values[e] * ((int32_t)x[j] - zx);
            }
        }
        nn_emit((float)acc * mult + bias[i], out, i, yq, yf);
    }
}

static inline void nn_conv_i8(const int8_t *values, const uint8_t *deltas, uint32_t n,
                              const int8_t *x, int32_t zx, const nn_conv_geom *g, uint32_t out_c,
                              float mult, const float *bias, const nn_affine *out,
                              int8_t *scratch, int8_t *yq, float *yf)
{
    nn_cursor cur;
    uint32_t i, j, e;
    int32_t oh, ow, ic, kh, kw;
    int32_t plane = g->in_h * g->in_w;
    uint32_t ws = (uint32_t)(g->in_c * g->k_h * g->k_w);
    uint32_t out_plane = (uint32_t)(g->out_h * g->out_w);
    nn_cursor_init(&cur, deltas, n);
    for (i = 0; i < out_c; i++) {
        for (j = 0; j < ws; j++) {
            scratch[j] = nn_cursor_take(&cur, i * ws + j, &e) ? values[e] : 0;
        }
        for (oh = 0; oh < g->out_h; oh++) {
            for (ow = 0; ow < g->out_w; ow++) {
                int32_t acc = 0;
                for (ic = 0; ic < g->in_c; ic++) {
                    const int8_t *chan = x + ic * plane;
                    const int8_t *kchan = scratch + ic * g->k_h * g->k_w;
                    for (kh = 0; kh < g->k_h; kh++) {
                        int32_t ih = nn_tap(oh, kh, g->stride, g->padding, g->in_h);
                        if (ih < 0) {
                            continue;
                        }
                        for (kw = 0; kw < g->k_w; kw++) {
                            int32_t iw = nn_tap(ow, kw, g->stride, g->padding, g->in_w);
                            if (iw < 0) {
                                continue;
                            }
                            acc += (int32_t)kchan[kh * g->k_w + kw] * ((int32_t)chan[ih * g->in_w + iw] - zx);
                        }
                    }
                }
                nn_emit((float)acc * mult + bias[i], out, i * out_plane + (uint32_t)(oh * g->out_w + ow), yq, yf);
            }
        }
    }
}

/* int8 weights applied to a float input (input quantization disabled). */

static inline void nn_fc_i8w_f32x(const int8_t *values, const uint8_t *deltas, uint32_t n,
                                  const float *x, uint32_t r, uint32_t c,
                                  float w_scale, const float *bias, const nn_affine *out,
                                  int8_t *yq, float *yf)
{
    nn_cursor cur;
    uint32_t i, j, e;
    nn_cursor_init(&cur, deltas, n);
    for (i = 0; i < c; i++) {
        float sum = 0.0f;
        for (j = 0; j < r; j++) {
            if (nn_cursor_take(&cur, i * r + j, &e)) {
                sum += x[j] * (float)values[e];
            }
        }
        nn_emit(sum * w_scale + bias[i], out, i, yq, yf);
    }
}

static inline void nn_conv_i8w_f32x(const int8_t *values, const uint8_t *deltas, uint32_t n,
                                    const float *x, const nn_conv_geom *g, uint32_t out_c,
                                    float w_scale, const float *bias, const nn_affine *out,
                                    int8_t *scratch, int8_t *yq, float *yf)
{
    nn_cursor cur;
    uint32_t i, j, e;
    int32_t oh, ow, ic, kh, kw;
    int32_t plane = g->in_h * g->in_w;
    uint32_t ws = (uint32_t)(g->in_c * g->k_h * g->k_w);
    uint32_t out_plane = (uint32_t)(g->out_h * g->out_w);
    nn_cursor_init(&cur, deltas, n);
    for (i = 0; i < out_c; i++) {
        for (j = 0; j < ws; j++) {
            scratch[j] = nn_cursor_take(&cur, i * ws + j, &e) ? values[e] : 0;
        }
        for (oh = 0; oh < g->out_h; oh++) {
            for (ow = 0; ow < g->out_w; ow++) {
                float sum = 0.0f;
                for (ic = 0; ic < g->in_c; ic++) {
                    const float *chan = x + ic * plane;
                    const int8_t *kchan = scratch + ic * g->k_h * g->k_w;
                    for (kh = 0; kh < g->k_h; kh++) {
                        int32_t ih = nn_tap(oh, kh, g->stride, g->padding, g->in_h);
                        if (ih < 0) {
                            continue;
                        }
                        for (kw = 0; kw < g->k_w; kw++) {
                            int32_t iw = nn_tap(ow, kw, g->stride, g->padding, g->in_w);
                            if (iw < 0) {
                                continue;
                            }
                            sum += chan[ih * g->in_w + iw] * (float)kchan[kh * g->k_w + kw];
                        }
                    }
                }
                nn_emit(sum * w_scale + bias[i], out, i * out_plane + (uint32_t)(oh * g->out_w + ow), yq, yf);
            }
        }
    }
}

static inline void nn_relu_i8(const int8_t *x, uint32_t len, int8_t zero_point, int8_t *y)
{
    uint32_t i;
    for (i = 0; i < len; i++) {
        y[i] = x[i] > zero_point ? x[i] : zero_point;
    }
}

static inline void nn_maxpool_i8(const int8_t *x, int32_t c, int32_t h, int32_t w,
                                 int32_t k, int32_t stride, int8_t *y)
{
    int32_t ch, oh, ow, kh, kw;
    int32_t out_h = (h - k) / stride + 1;
    int32_t out_w = (w - k) / stride + 1;
    for (ch = 0; ch < c; ch++) {
        const int8_t *chan = x + ch * h * w;
        for (oh = 0; oh < out_h; oh++) {
            for (ow = 0; ow < out_w; ow++) {
                int8_t best = chan[oh * stride * w + ow * stride];
                for (kh = 0; kh < k; kh++) {
                    for (kw = 0; kw < k; kw++) {
                        int8_t v = chan[(oh * stride + kh) * w + ow * stride + kw];
                        if (v > best) {
                            best = v;
                        }
                    }
                }
                y[(ch * out_h + oh) * out_w + ow] = best;
            }
        }
    }
}

#endif /* NN_KERNELS_H */
