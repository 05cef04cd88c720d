/* The public header must compile as C. */
#include <stdio.h>
#include <string.h>

#include "bprun/bprun.h"

int main(void) {
    bpr_daemon* d = NULL;
    if (strlen(bpr_version()) == 0) return 1;
    if (bpr_daemon_open("/nonexistent", &d) == BPR_OK) return 1;
    if (strcmp(bpr_status_name(BPR_ERR_NOT_FOUND), "not_found") != 0) return 1;
    printf("%s\n", bpr_last_error());
    return 0;
}
