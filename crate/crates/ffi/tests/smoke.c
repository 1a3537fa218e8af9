#include <stdio.h>
#include <string.h>
#include "skorohod.h"

int main(void) {
    SkorohodDomain *d = NULL;
    if (skorohod_domain_from_json("{\"kind\": \"half_space\", \"params\": {\"normal\": [1.0], \"offset\": 0.0}}", &d)
        != SKOROHOD_STATUS_OK) {
        fprintf(stderr, "domain: %s\n", skorohod_last_error());
        return 1;
    }
    double times[3] = {0.0, 0.5, 1.0};
    double values[3] = {0.0, -1.0, 0.5};
    double x0 = 0.25, x[3], tv[3];
    if (skorohod_solve(d, times, values, 3, &x0, x, NULL, tv) != SKOROHOD_STATUS_OK) {
        fprintf(stderr, "solve: %s\n", skorohod_last_error());
        return 1;
    }
    printf("%.6f %.6f %.6f %.6f\n", x[0], x[1], x[2], tv[2]);
    SkorohodStatus s = skorohod_domain_from_json("{\"kind\": \"ball\"}", NULL);
    printf("%d\n", (int)s);
    skorohod_domain_free(d);
    return 0;
}
