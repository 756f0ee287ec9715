#include <stdio.h>
#include <string.h>

#include "region_templates.h"

#define CHECK(cond)                                                  \
    do {                                                             \
        if (!(cond)) {                                               \
            const char *e = rt_last_error();                         \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,  \
                    #cond, e ? e : "no error");                      \
            return 1;                                                \
        }                                                            \
    } while (0)

int main(int argc, char **argv) {
    uint64_t pt[2] = {5, 3}, back[2] = {0, 0}, h = 0;
    CHECK(rt_sfc_encode(2, 3, pt, &h) == RT_STATUS_OK);
    CHECK(rt_sfc_decode(2, 3, h, back) == RT_STATUS_OK);
    CHECK(back[0] == 5 && back[1] == 3);
    CHECK(rt_sfc_decode(2, 3, 64, back) == RT_STATUS_INVALID_ARGUMENT);
    CHECK(rt_last_error() != NULL);

    int64_t lo[2] = {0, 0}, hi[2] = {15, 15}, cells[2] = {2, 2};
    RtDms *dms = NULL;
    CHECK(rt_dms_new(2, lo, hi, cells, 4, &dms) == RT_STATUS_OK);

    float data[12], out[12];
    for (int i = 0; i < 12; i++) data[i] = (float)i;
    int64_t blo[2] = {2, 4}, bhi[2] = {4, 7};
    CHECK(rt_dms_stage_f32(dms, "tile", 2, blo, bhi, data, 12, 3) == RT_STATUS_OK);
    CHECK(rt_dms_read_f32(dms, "tile", 2, blo, bhi, out, 12) == RT_STATUS_OK);
    CHECK(memcmp(data, out, sizeof data) == 0);
    CHECK(rt_dms_read_f32(dms, "other", 2, blo, bhi, out, 12) == RT_STATUS_NOT_FOUND);
    rt_dms_free(dms);

    if (argc > 1) {
        RtSimResult *r = NULL;
        RtMetrics m;
        CHECK(rt_sim_run(argv[1], &r) == RT_STATUS_OK);
        CHECK(rt_sim_metrics(r, &m) == RT_STATUS_OK);
        CHECK(m.tasks > 0 && m.makespan > 0.0);
        CHECK(strstr(rt_sim_trace(r), "task_start") != NULL);
        printf("tasks=%zu makespan=%.3f\n", m.tasks, m.makespan);
        rt_sim_free(r);
    }
    return 0;
}
