/* kernel-library code for F_Region2 (target clib) */
#include <stdint.h>
#include <string.h>

typedef struct {
    void *data;
    const int64_t *shape;
    int32_t ndim;
    int32_t dtype; /* 0 f32, 1 i8, 2 i32, 3 bool */
} byoc_tensor;

extern int32_t byoc_add(const byoc_tensor *args, int32_t nargs, byoc_tensor *out, const char *attrs);
extern int32_t byoc_bias_add(const byoc_tensor *args, int32_t nargs, byoc_tensor *out, const char *attrs);
extern int32_t byoc_conv2d(const byoc_tensor *args, int32_t nargs, byoc_tensor *out, const char *attrs);
extern int32_t byoc_relu(const byoc_tensor *args, int32_t nargs, byoc_tensor *out, const char *attrs);

static const int64_t shape0[4] = {1, 4, 8, 8};
static float buf0[256];
static const int64_t shape1[4] = {1, 4, 8, 8};
static float buf1[256];
static const int64_t shape2[4] = {1, 4, 8, 8};
static float buf2[256];
static const int64_t shape3[4] = {1, 4, 8, 8};
static float buf3[256];
static const int64_t shape4[4] = {1, 4, 8, 8};
static float buf4[256];
static const int64_t shape5[4] = {1, 4, 8, 8};
static float buf5[256];

int32_t F_Region2(const byoc_tensor *params, const byoc_tensor *consts, byoc_tensor *results)
{
    byoc_tensor t0_n10 = {buf0, shape0, 4, 0};
    byoc_tensor t1_n11 = {buf1, shape1, 4, 0};
    byoc_tensor t2_n12 = {buf2, shape2, 4, 0};
    byoc_tensor t3_n13 = {buf3, shape3, 4, 0};
    byoc_tensor t4_n14 = {buf4, shape4, 4, 0};
    byoc_tensor t5_n15 = {buf5, shape5, 4, 0};
    {
        const byoc_tensor args[1] = {params[0]};
        if (byoc_relu(args, 1, &t0_n10, "{}") != 0) return 1;
    }
    {
        const byoc_tensor args[2] = {t0_n10, consts[1]};
        if (byoc_add(args, 2, &t1_n11, "{}") != 0) return 1;
    }
    {
        const byoc_tensor args[1] = {t1_n11};
        if (byoc_relu(args, 1, &t2_n12, "{}") != 0) return 1;
    }
    {
        const byoc_tensor args[2] = {t2_n12, consts[2]};
        if (byoc_conv2d(args, 2, &t3_n13, "{\"composite\":\"conv2d_pattern_0\",\"padding\":[1,1],\"pattern_name\":\"conv2d_pattern\"}") != 0) return 1;
    }
    {
        const byoc_tensor args[2] = {t3_n13, consts[0]};
        if (byoc_bias_add(args, 2, &t4_n14, "{\"composite\":\"conv2d_pattern_0\",\"pattern_name\":\"conv2d_pattern\"}") != 0) return 1;
    }
    {
        const byoc_tensor args[1] = {t4_n14};
        if (byoc_relu(args, 1, &t5_n15, "{\"composite\":\"conv2d_pattern_0\",\"pattern_name\":\"conv2d_pattern\"}") != 0) return 1;
    }
    memcpy(results[0].data, t5_n15.data, 1024);
    return 0;
}
