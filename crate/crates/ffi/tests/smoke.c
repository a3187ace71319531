#include <math.h>
#include <stdio.h>
#include <string.h>

#include "weaklabel.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "line %d: %s\n", __LINE__, #cond);        \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    WlConfusion *cm = wl_confusion_new(2);
    CHECK(cm != NULL);
    for (int i = 0; i < 90; i++) CHECK(wl_confusion_add(cm, 0, 0) == WL_STATUS_OK);
    for (int i = 0; i < 10; i++) CHECK(wl_confusion_add(cm, 1, 0) == WL_STATUS_OK);
    double acc = 0, avg = 0;
    CHECK(wl_confusion_metrics(cm, &acc, &avg) == WL_STATUS_OK);
    CHECK(acc == 0.9 && avg == 0.5);
    CHECK(wl_confusion_add(cm, 2, 0) == WL_STATUS_INVALID_ARGUMENT);
    CHECK(wl_last_error() != NULL);
    wl_confusion_free(cm);

    size_t labels[4] = {0, 0, 0, 1};
    double w[2];
    CHECK(wl_class_weights(labels, 4, 2, WL_WEIGHT_MODE_PROPORTIONAL, w) == WL_STATUS_OK);
    CHECK(w[0] == 1.5 && w[1] == 0.5);

    double logits[2] = {0.0, 0.0};
    size_t y = 1;
    double loss = 0, grad[2];
    CHECK(wl_weighted_ce_loss(logits, 1, 2, &y, NULL, &loss, grad) == WL_STATUS_OK);
    CHECK(fabs(loss - log(2.0)) < 1e-15 && grad[0] == 0.5 && grad[1] == -0.5);

    WlDetections *dets = NULL;
    const char *text =
        "{\"video_id\":\"v1\",\"frame\":0,\"bbox\":[1,2,3,4],\"score\":0.2}\n"
        "{\"video_id\":\"v1\",\"frame\":0,\"bbox\":[5,6,7,8],\"score\":0.9}\n";
    CHECK(wl_detections_parse(text, &dets) == WL_STATUS_OK);
    WlDetections *best = NULL;
    CHECK(wl_detections_best(dets, &best) == WL_STATUS_OK);
    CHECK(wl_detections_len(best) == 1);
    WlDetection d;
    CHECK(wl_detections_get(best, 0, &d) == WL_STATUS_OK);
    CHECK(d.x == 5 && d.score == 0.9 && strcmp(wl_detections_video_id(best, 0), "v1") == 0);
    wl_detections_free(best);
    wl_detections_free(dets);
    CHECK(wl_detections_parse("{oops}", &dets) == WL_STATUS_INGEST);

    unsigned char px[4 * 4 * 3];
    for (int i = 0; i < 48; i++) px[i] = (unsigned char)(i * 5);
    double feats[1024];
    size_t dim = wl_feature_dim();
    CHECK(dim == 532);
    CHECK(wl_extract_features(px, 4, 4, 3, feats, dim) == WL_STATUS_OK);
    printf("ok %s\n", wl_version());
    return 0;
}
