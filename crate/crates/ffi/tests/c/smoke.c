#include <stdio.h>
#include <string.h>
#include "thermopatch.h"

#define CHECK(call)                                                   \
    do {                                                              \
        TpStatus s_ = (call);                                         \
        if (s_ != TP_STATUS_OK) {                                     \
            fprintf(stderr, "%s -> %d: %s\n", #call, s_,              \
                    tp_last_error() ? tp_last_error() : "(none)");    \
            return 1;                                                 \
        }                                                             \
    } while (0)

static const char *THETA =
    "{\"dim\":2,\"width_frac\":0.25,\"gray\":0.0,\"boundary_kind\":\"bezier\","
    "\"deltas\":[0,0,0,0,0,0,0,0,0,0,0,0],\"mask\":[[1,1],[1,1]]}";

int main(void) {
    TpTheta *theta = NULL;
    TpTheta *broken = NULL;
    TpImage *patch = NULL;
    TpToyOracle *oracle = NULL;
    double px[16];
    double box[4] = {0, 0, 4, 4};
    double score = -1;

    CHECK(tp_theta_from_json(THETA, &theta));
    CHECK(tp_render_patch(theta, 4, &patch));
    CHECK(tp_image_pixels(patch, px, 16));
    for (int i = 0; i < 16; i++) {
        if (px[i] != 0.0) return 2;
    }
    if (tp_theta_from_json("{", &broken) != TP_STATUS_PARSE || tp_last_error() == NULL) return 3;
    CHECK(tp_toy_oracle_new(&oracle));
    CHECK(tp_toy_score(oracle, patch, box, 1, &score));
    if (score < 0.0 || score > 1.0) return 4;
    printf("ok %s %.6f\n", tp_version(), score);
    tp_toy_oracle_free(oracle);
    tp_image_free(patch);
    tp_theta_free(theta);
    return 0;
}
