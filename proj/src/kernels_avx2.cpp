#include "povmap/kernels.hpp"

// AVX2 kernels. Compiled with -mavx2 -ffp-contract=off; only reachable after
// the dispatcher verified CPU support. Lane discipline matches the scalar
// reference: element i lands in accumulator lane i mod 4, lanes combine as
// (l0 + l1) + (l2 + l3), and no FMA contraction is allowed, which keeps the
// two paths bit-identical.

#if defined(__AVX2__)

#include <immintrin.h>

namespace povmap::kernels {
namespace {

inline double combine_lanes(__m256d acc) {
    alignas(32) double lane[4];
    _mm256_store_pd(lane, acc);
    return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

void chord_sq_batch_avx2(double qx, double qy, double qz, const double *xs,
                         const double *ys, const double *zs, std::size_t n,
                         double *out) {
    const __m256d vqx = _mm256_set1_pd(qx);
    const __m256d vqy = _mm256_set1_pd(qy);
    const __m256d vqz = _mm256_set1_pd(qz);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), vqx);
        const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), vqy);
        const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), vqz);
        const __m256d s = _mm256_add_pd(
            _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
            _mm256_mul_pd(dz, dz));
        _mm256_storeu_pd(out + i, s);
    }
    for (; i < n; ++i) {
        const double dx = xs[i] - qx;
        const double dy = ys[i] - qy;
        const double dz = zs[i] - qz;
        out[i] = dx * dx + dy * dy + dz * dz;
    }
}

double sum_avx2(const double *x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    }
    alignas(32) double lane[4];
    _mm256_store_pd(lane, acc);
    for (; i < n; ++i) {
        lane[i & 3] += x[i];
    }
    return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double dot_avx2(const double *a, const double *b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(
            acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    alignas(32) double lane[4];
    _mm256_store_pd(lane, acc);
    for (; i < n; ++i) {
        lane[i & 3] += a[i] * b[i];
    }
    return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double sum_sq_diff_avx2(const double *a, const double *b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d =
            _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
    }
    alignas(32) double lane[4];
    _mm256_store_pd(lane, acc);
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        lane[i & 3] += d * d;
    }
    return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

void weighted_pair_sums_avx2(const double *w, const double *a, const double *b,
                             std::size_t n, double out[5]) {
    __m256d sw = _mm256_setzero_pd();
    __m256d swa = _mm256_setzero_pd();
    __m256d swaa = _mm256_setzero_pd();
    __m256d swb = _mm256_setzero_pd();
    __m256d swbb = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d vw = _mm256_loadu_pd(w + i);
        const __m256d va = _mm256_loadu_pd(a + i);
        const __m256d vb = _mm256_loadu_pd(b + i);
        const __m256d vwa = _mm256_mul_pd(vw, va);
        const __m256d vwb = _mm256_mul_pd(vw, vb);
        sw = _mm256_add_pd(sw, vw);
        swa = _mm256_add_pd(swa, vwa);
        swaa = _mm256_add_pd(swaa, _mm256_mul_pd(vwa, va));
        swb = _mm256_add_pd(swb, vwb);
        swbb = _mm256_add_pd(swbb, _mm256_mul_pd(vwb, vb));
    }
    alignas(32) double lw[4], lwa[4], lwaa[4], lwb[4], lwbb[4];
    _mm256_store_pd(lw, sw);
    _mm256_store_pd(lwa, swa);
    _mm256_store_pd(lwaa, swaa);
    _mm256_store_pd(lwb, swb);
    _mm256_store_pd(lwbb, swbb);
    for (; i < n; ++i) {
        const std::size_t k = i & 3;
        const double wi = w[i];
        const double wa = wi * a[i];
        const double wb = wi * b[i];
        lw[k] += wi;
        lwa[k] += wa;
        lwaa[k] += wa * a[i];
        lwb[k] += wb;
        lwbb[k] += wb * b[i];
    }
    out[0] = (lw[0] + lw[1]) + (lw[2] + lw[3]);
    out[1] = (lwa[0] + lwa[1]) + (lwa[2] + lwa[3]);
    out[2] = (lwaa[0] + lwaa[1]) + (lwaa[2] + lwaa[3]);
    out[3] = (lwb[0] + lwb[1]) + (lwb[2] + lwb[3]);
    out[4] = (lwbb[0] + lwbb[1]) + (lwbb[2] + lwbb[3]);
}

void standardize_avx2(double *x, std::size_t n, double mean, double inv_std) {
    const __m256d vm = _mm256_set1_pd(mean);
    const __m256d vs = _mm256_set1_pd(inv_std);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v =
            _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i), vm), vs);
        _mm256_storeu_pd(x + i, v);
    }
    for (; i < n; ++i) {
        x[i] = (x[i] - mean) * inv_std;
    }
}

} // namespace

const Ops *avx2_ops_table() {
    static const Ops table{chord_sq_batch_avx2, sum_avx2,   dot_avx2,
                           sum_sq_diff_avx2,    weighted_pair_sums_avx2,
                           standardize_avx2};
    return &table;
}

} // namespace povmap::kernels

#else

namespace povmap::kernels {
const Ops *avx2_ops_table() { return nullptr; }
} // namespace povmap::kernels

#endif
