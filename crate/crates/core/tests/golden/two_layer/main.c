/* Generated inference entry point. Do not edit. */
#include "main.h"
#include <stdio.h>

static float nn_ping[NN_ACT_LEN];
static float nn_pong[NN_ACT_LEN];

void nn_forward(const float *input, float *logits)
{
    uint32_t k;
    for (k = 0; k < NN_INPUT_LEN; k++) {
        nn_ping[k] = input[k];
    }
    /* L0 flatten */
    /* layout unchanged */
    /* L1 linear 6->4 */
    nn_fc_f32(weights_L1, deltas_L1, NN_L1_ENTRIES, nn_ping, 6u, 4u, bias_L1, nn_pong);
    /* L2 relu */
    nn_relu_f32(nn_pong, 4u, nn_ping);
    /* L3 linear 4->2 */
    nn_fc_f32(weights_L3, deltas_L3, NN_L3_ENTRIES, nn_ping, 4u, 2u, bias_L3, nn_pong);
    for (k = 0; k < NN_OUTPUT_LEN; k++) {
        logits[k] = nn_pong[k];
    }
}

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
