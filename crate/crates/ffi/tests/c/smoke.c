#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "nightseg.h"

#define CHECK(expr)                                                          \
    do {                                                                     \
        NsStatus s_ = (expr);                                                \
        if (s_ != NS_STATUS_OK) {                                            \
            fprintf(stderr, "%s -> %d: %s\n", #expr, s_, ns_last_error_message()); \
            return 1;                                                        \
        }                                                                    \
    } while (0)

int main(int argc, char **argv) {
    enum { W = 40, H = 30 };
    static unsigned char rgb[W * H * 3];
    static unsigned char labels[W * H];
    for (int y = 0; y < H; y++)
        for (int x = 0; x < W; x++) {
            unsigned char *p = rgb + 3 * (y * W + x);
            if (x < W / 2) { p[0] = 10; p[1] = 20; p[2] = 220; }
            else           { p[0] = 220; p[1] = 40; p[2] = 30; }
        }

    NsImage *img = NULL;
    NsMask *mask = NULL;
    CHECK(ns_image_from_rgb(W, H, rgb, sizeof rgb, &img));

    NsSegmentParams params = ns_segment_params_default();
    params.superpixels = 4;
    CHECK(ns_segment(img, "c14", &params, &mask));
    CHECK(ns_mask_copy_labels(mask, labels, sizeof labels));
    for (int y = 0; y < H; y++)
        for (int x = 0; x < W; x++)
            if (labels[y * W + x] != (x >= W / 2)) {
                fprintf(stderr, "wrong label at %d,%d\n", x, y);
                return 1;
            }

    NsMetrics m;
    CHECK(ns_evaluate(mask, mask, &m));
    if (m.true_pos != W * H / 2 || m.fscore != 1.0) return 1;

    if (argc > 1) CHECK(ns_mask_save(mask, argv[1]));

    NsMask *bad = NULL;
    if (ns_segment(img, "purple", NULL, &bad) != NS_STATUS_INVALID_ARGUMENT) return 1;
    if (strstr(ns_last_error_message(), "purple") == NULL) return 1;

    ns_mask_free(mask);
    ns_image_free(img);
    printf("ok %s\n", ns_version());
    return 0;
}
