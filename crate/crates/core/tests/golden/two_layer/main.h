/* Generated model data. Do not edit. */
#ifndef NN_MAIN_H
#define NN_MAIN_H

#include "nn_kernels.h"

#define NN_INPUT_LEN 6u
#define NN_OUTPUT_LEN 2u
#define NN_ACT_LEN 6u
#define NN_SCRATCH_LEN 0u
#define NN_FLOAT_PREFIX_LEN 0u
#define NN_QUANTIZED 0
#define NN_HAS_TEST_INPUT 1

void nn_forward(const float *input, float *logits);

/* L1 linear 6->4: 24 weights, 8 stored entries */
#define NN_L1_ENTRIES 8u
static const uint8_t deltas_L1[8] = {
    0, 3, 3, 3, 3, 3, 3, 3,
};
static const float weights_L1[8] = {
    -1.375f, -1.0f, -0.625f, -0.25f, 0.125f, 0.5f, 0.875f, 1.25f,
};
static const float bias_L1[4] = {
    0.5f, -0.25f, 0.0f, 0.125f,
};

/* L3 linear 4->2: 8 weights, 4 stored entries */
#define NN_L3_ENTRIES 4u
static const uint8_t deltas_L3[4] = {
    1, 2, 2, 2,
};
static const float weights_L3[4] = {
    0.25f, 0.75f, 1.25f, 1.75f,
};
static const float bias_L3[2] = {
    -1.0f, 1.0f,
};

static const float nn_test_input[6] = {
    1.0f, 0.5f, -0.5f, 0.25f, 0.0f, 2.0f,
};
static const float nn_expected_logits[2] = {
    -0.015625f, 3.296875f,
};

#endif /* NN_MAIN_H */
