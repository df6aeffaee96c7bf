/* Gibbs state of diag(0,1,2) at beta = 1, then the outer daseinisation of e1. */
#include <math.h>
#include <stdio.h>
#include <stddef.h>
#include "toposkms.h"

static int check(enum TkStatus s, const char *what) {
    if (s != TK_STATUS_OK) {
        fprintf(stderr, "%s: status %d: %s\n", what, (int)s, tk_last_error());
        return 1;
    }
    return 0;
}

int main(void) {
    double h_re[9] = {0, 0, 0, 0, 1, 0, 0, 0, 2};
    double e1_re[9] = {1, 0, 0, 0, 0, 0, 0, 0, 0};
    double p12_re[9] = {0.5, 0.5, 0, 0.5, 0.5, 0, 0, 0, 0};
    TkMatrix *h = NULL, *e1 = NULL, *p12 = NULL, *d = NULL;
    TkState *state = NULL;
    TkContext *ctx = NULL;
    double p = 0.0, re = 0.0, im = 0.0;

    if (check(tk_matrix_new(3, h_re, NULL, &h), "hamiltonian")) return 1;
    if (check(tk_matrix_new(3, e1_re, NULL, &e1), "e1")) return 1;
    if (check(tk_matrix_new(3, p12_re, NULL, &p12), "p12")) return 1;
    if (check(tk_state_gibbs(h, 1.0, &state), "gibbs")) return 1;
    if (check(tk_state_probability(state, e1, &p), "probability")) return 1;
    printf("p(e1) = %.15f\n", p);
    if (fabs(p - 1.0 / (1.0 + exp(-1.0) + exp(-2.0))) > 1e-14) return 3;

    if (check(tk_context_binary(p12, &ctx), "context")) return 1;
    if (check(tk_outer_daseinisation(e1, ctx, &d), "daseinisation")) return 1;
    if (check(tk_matrix_get(d, 2, 2, &re, &im), "get")) return 1;
    printf("dasein(e1)[2][2] = %.3f\n", re);
    if (fabs(re - 1.0) > 1e-12) return 3;

    char *report = NULL;
    enum TkStatus s = tk_run_scenario("{not json", &report);
    printf("malformed scenario -> %d\n", (int)s);
    if (s != TK_STATUS_PARSE_ERROR || report != NULL) return 3;

    tk_matrix_free(d);
    tk_context_free(ctx);
    tk_state_free(state);
    tk_matrix_free(p12);
    tk_matrix_free(e1);
    tk_matrix_free(h);
    printf("toposkms %s ok\n", tk_version());
    return 0;
}
