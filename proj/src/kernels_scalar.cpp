#include "povmap/kernels.hpp"

// Scalar reference kernels. Reductions run four interleaved accumulator
// lanes so the AVX2 variant can reproduce them bit for bit; see kernels.hpp.

namespace povmap::kernels {
namespace {

void chord_sq_batch_scalar(double qx, double qy, double qz, const double *xs,
                           const double *ys, const double *zs, std::size_t n,
                           double *out) {
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - qx;
        const double dy = ys[i] - qy;
        const double dz = zs[i] - qz;
        out[i] = dx * dx + dy * dy + dz * dz;
    }
}

double sum_scalar(const double *x, std::size_t n) {
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        lane[i & 3] += x[i];
    }
    return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double dot_scalar(const double *a, const double *b, std::size_t n) {
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        lane[i & 3] += a[i] * b[i];
    }
    return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double sum_sq_diff_scalar(const double *a, const double *b, std::size_t n) {
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        lane[i & 3] += d * d;
    }
    return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

void weighted_pair_sums_scalar(const double *w, const double *a,
                               const double *b, std::size_t n, double out[5]) {
    double lw[4] = {}, lwa[4] = {}, lwaa[4] = {}, lwb[4] = {}, lwbb[4] = {};
    for (std::size_t i = 0; i < n; ++i) {
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

void standardize_scalar(double *x, std::size_t n, double mean, double inv_std) {
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = (x[i] - mean) * inv_std;
    }
}

} // namespace

const Ops &scalar_ops() {
    static const Ops table{chord_sq_batch_scalar, sum_scalar,   dot_scalar,
                           sum_sq_diff_scalar,    weighted_pair_sums_scalar,
                           standardize_scalar};
    return table;
}

} // namespace povmap::kernels
