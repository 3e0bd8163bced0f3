#include <stdio.h>
#include "dnlmm.h"

int main(void) {
    DnlmmTopology *t = NULL;
    DnlmmCombination *c = NULL;
    size_t n = 0;
    double w = 0.0;
    if (dnlmm_topology_ring(5, &t) != DNLMM_STATUS_OK) return 1;
    if (dnlmm_topology_node_count(t, &n) != DNLMM_STATUS_OK || n != 5) return 2;
    if (dnlmm_combination_metropolis(t, &c) != DNLMM_STATUS_OK) return 3;
    if (dnlmm_combination_weight(c, 0, 0, &w) != DNLMM_STATUS_OK) return 4;
    if (dnlmm_topology_node_count(NULL, &n) != DNLMM_STATUS_NULL_POINTER) return 5;
    char msg[64];
    size_t need = dnlmm_last_error_message(msg, sizeof msg);
    if (need > sizeof msg) return 6;
    printf("%.6f %s\n", w, msg);
    dnlmm_combination_free(c);
    dnlmm_topology_free(t);
    return 0;
}
