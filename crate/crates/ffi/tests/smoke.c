#include <stdio.h>
#include <stdlib.h>
#include "bna.h"

int main(void) {
    BnaGraph *graph = NULL;
    if (bna_graph_synthetic("sbm", 3, &graph) != BNA_STATUS_OK) {
        fprintf(stderr, "load: %s\n", bna_last_error_message());
        return 1;
    }
    size_t nodes = 0, classes = 0;
    bna_graph_shape(graph, &nodes, NULL, &classes);
    BnaModel *model = NULL;
    if (bna_train(graph, "epochs=5;hidden=8;truncation=3", &model) != BNA_STATUS_OK) {
        fprintf(stderr, "train: %s\n", bna_last_error_message());
        return 1;
    }
    double *probs = malloc(nodes * classes * sizeof(double));
    if (bna_predict(model, graph, probs, nodes * classes) != BNA_STATUS_OK) {
        fprintf(stderr, "predict: %s\n", bna_last_error_message());
        return 1;
    }
    double row = 0.0;
    for (size_t c = 0; c < classes; c++) row += probs[c];
    if (bna_predict(model, graph, probs, 1) != BNA_STATUS_INVALID_ARGUMENT) return 2;
    bool passed = false;
    if (bna_verify_theory("trials=5;depth=6", &passed) != BNA_STATUS_OK || !passed) return 3;
    printf("nodes %zu classes %zu row_sum %.12f\n", nodes, classes, row);
    free(probs);
    bna_model_free(model);
    bna_graph_free(graph);
    return 0;
}
