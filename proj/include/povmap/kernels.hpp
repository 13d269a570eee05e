#pragma once

#include <cstddef>

namespace povmap::kernels {

/// Batch arithmetic kernels behind the spatial index, the tree trainer, and
/// the metric reductions. Two implementations exist: a scalar reference and
/// an AVX2 variant selected at runtime. Both accumulate reductions in four
/// independent lanes (element i feeds lane i mod 4) and combine the lanes as
/// (l0 + l1) + (l2 + l3), so their results are bit-identical; the equivalence
/// suite in tests/ checks exactly that.
struct Ops {
    /// out[i] = squared 3-D distance from (qx,qy,qz) to (xs[i],ys[i],zs[i]).
    void (*chord_sq_batch)(double qx, double qy, double qz, const double *xs,
                           const double *ys, const double *zs, std::size_t n,
                           double *out);

    /// Four-lane sum of x[0..n).
    double (*sum)(const double *x, std::size_t n);

    /// Four-lane dot product of a and b.
    double (*dot)(const double *a, const double *b, std::size_t n);

    /// Four-lane sum of squared differences, sum((a[i]-b[i])^2).
    double (*sum_sq_diff)(const double *a, const double *b, std::size_t n);

    /// out = {sum w, sum w*a, sum w*a^2, sum w*b, sum w*b^2}, four-lane.
    void (*weighted_pair_sums)(const double *w, const double *a,
                               const double *b, std::size_t n, double out[5]);

    /// x[i] = (x[i] - mean) * inv_std, in place.
    void (*standardize)(double *x, std::size_t n, double mean, double inv_std);
};

/// The active implementation. Picked once, on first call: AVX2 when the CPU
/// supports it, unless POVMAP_SIMD=scalar forces the reference path
/// (POVMAP_SIMD=avx2 requests the vector path explicitly and fails back to
/// scalar when unsupported).
const Ops &ops();

/// The scalar reference, always available; the equivalence tests compare
/// against this regardless of what ops() selected.
const Ops &scalar_ops();

/// AVX2 table, or nullptr when the build target or CPU lacks AVX2.
const Ops *avx2_ops();

/// Name of the selected implementation: "scalar" or "avx2".
const char *active_name();

} // namespace povmap::kernels
