#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include "selbayes.h"

#define N 60
#define P 5

static unsigned long long state = 88172645463325252ULL;

static double uniform(void) {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return (state >> 11) * (1.0 / 9007199254740992.0);
}

static double normal(void) {
    double u = uniform(), v = uniform();
    return sqrt(-2.0 * log(u + 1e-300)) * cos(6.283185307179586 * v);
}

int main(void) {
    double g[N * P], y[N];
    for (int k = 0; k < N * P; k++) g[k] = normal();
    for (int i = 0; i < N; i++) y[i] = 3.0 * g[i] - 2.0 * g[N + i] + normal();

    SbSelection *sel = NULL;
    if (sb_select(y, g, N, P, 0.0, 0.0, 42, &sel) != SB_STATUS_OK) {
        fprintf(stderr, "select: %s\n", sb_last_error_message());
        return 1;
    }
    size_t e = 0;
    sb_selection_len(sel, &e);
    if (e == 0) return 2;

    SbPosterior *post = NULL;
    if (sb_posterior_new(sel, 0.0, 0.0, &post) != SB_STATUS_OK) {
        fprintf(stderr, "posterior: %s\n", sb_last_error_message());
        return 3;
    }
    double level = 0.9;
    double *median = malloc(e * sizeof(double));
    double *lo = malloc(e * sizeof(double));
    double *hi = malloc(e * sizeof(double));
    if (sb_posterior_sample(post, 1200, 200, 7, &level, 1, median, lo, hi) != SB_STATUS_OK) {
        fprintf(stderr, "sample: %s\n", sb_last_error_message());
        return 4;
    }
    for (size_t j = 0; j < e; j++) {
        if (!(lo[j] <= median[j] && median[j] <= hi[j])) return 5;
    }
    /* errors are reported, not fatal */
    SbSelection *bad = NULL;
    if (sb_select(NULL, g, N, P, 0.0, 0.0, 1, &bad) != SB_STATUS_NULL_POINTER || bad != NULL) return 6;
    if (sb_last_error_message() == NULL) return 7;

    printf("selected %zu, version %s\n", e, sb_version());
    free(median);
    free(lo);
    free(hi);
    sb_posterior_free(post);
    sb_selection_free(sel);
    return 0;
}
