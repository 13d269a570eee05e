#include "doctest.h"

#include "povmap/kernels.hpp"
#include "povmap/rng.hpp"

#include <cmath>
#include <cstring>
#include <vector>

using povmap::Rng;
using namespace povmap::kernels;

namespace {

std::vector<double> random_vec(Rng &rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto &x : v) x = rng.uniform(lo, hi);
    return v;
}

bool bit_equal(double a, double b) {
    return std::memcmp(&a, &b, sizeof(double)) == 0;
}

} // namespace

TEST_CASE("scalar kernels match naive computations") {
    const Ops &k = scalar_ops();
    Rng rng(7);
    for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 15u, 16u, 17u, 100u}) {
        auto a = random_vec(rng, n, -3.0, 3.0);
        auto b = random_vec(rng, n, -3.0, 3.0);
        auto w = random_vec(rng, n, 0.1, 2.0);

        double s = 0, d = 0, ssd = 0;
        double ws[5] = {0, 0, 0, 0, 0};
        for (std::size_t i = 0; i < n; ++i) {
            s += a[i];
            d += a[i] * b[i];
            ssd += (a[i] - b[i]) * (a[i] - b[i]);
            ws[0] += w[i];
            ws[1] += w[i] * a[i];
            ws[2] += w[i] * a[i] * a[i];
            ws[3] += w[i] * b[i];
            ws[4] += w[i] * b[i] * b[i];
        }
        CHECK(k.sum(a.data(), n) == doctest::Approx(s).epsilon(1e-12));
        CHECK(k.dot(a.data(), b.data(), n) == doctest::Approx(d).epsilon(1e-12));
        CHECK(k.sum_sq_diff(a.data(), b.data(), n) ==
              doctest::Approx(ssd).epsilon(1e-12));
        double got[5];
        k.weighted_pair_sums(w.data(), a.data(), b.data(), n, got);
        for (int j = 0; j < 5; ++j) {
            CHECK(got[j] == doctest::Approx(ws[j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("scalar standardize and chord batch") {
    const Ops &k = scalar_ops();
    std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
    k.standardize(x.data(), x.size(), 2.5, 2.0);
    CHECK(x[0] == -3.0);
    CHECK(x[3] == 3.0);

    const double xs[2] = {1.0, 0.0};
    const double ys[2] = {0.0, 1.0};
    const double zs[2] = {0.0, 0.0};
    double out[2];
    k.chord_sq_batch(1.0, 0.0, 0.0, xs, ys, zs, 2, out);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 2.0);
}

TEST_CASE("avx2 kernels are bit-identical to the scalar reference") {
    const Ops *vec = avx2_ops();
    if (vec == nullptr) {
        MESSAGE("AVX2 unavailable on this machine, equivalence not exercised");
        return;
    }
    const Ops &ref = scalar_ops();
    Rng rng(99);
    for (std::size_t n = 0; n <= 67; ++n) {
        auto a = random_vec(rng, n, -1e3, 1e3);
        auto b = random_vec(rng, n, -1e3, 1e3);
        auto w = random_vec(rng, n, 0.0, 5.0);

        CHECK(bit_equal(ref.sum(a.data(), n), vec->sum(a.data(), n)));
        CHECK(bit_equal(ref.dot(a.data(), b.data(), n), vec->dot(a.data(), b.data(), n)));
        CHECK(bit_equal(ref.sum_sq_diff(a.data(), b.data(), n),
                        vec->sum_sq_diff(a.data(), b.data(), n)));

        double r5[5], v5[5];
        ref.weighted_pair_sums(w.data(), a.data(), b.data(), n, r5);
        vec->weighted_pair_sums(w.data(), a.data(), b.data(), n, v5);
        for (int j = 0; j < 5; ++j) CHECK(bit_equal(r5[j], v5[j]));

        auto xs = random_vec(rng, n, -1.0, 1.0);
        auto ys = random_vec(rng, n, -1.0, 1.0);
        auto zs = random_vec(rng, n, -1.0, 1.0);
        std::vector<double> co_ref(n), co_vec(n);
        ref.chord_sq_batch(0.1, -0.2, 0.97, xs.data(), ys.data(), zs.data(), n,
                           co_ref.data());
        vec->chord_sq_batch(0.1, -0.2, 0.97, xs.data(), ys.data(), zs.data(), n,
                            co_vec.data());
        for (std::size_t i = 0; i < n; ++i) CHECK(bit_equal(co_ref[i], co_vec[i]));

        auto s_ref = a;
        auto s_vec = a;
        ref.standardize(s_ref.data(), n, 0.37, 1.91);
        vec->standardize(s_vec.data(), n, 0.37, 1.91);
        for (std::size_t i = 0; i < n; ++i) CHECK(bit_equal(s_ref[i], s_vec[i]));
    }
}

TEST_CASE("dispatch honors POVMAP_SIMD and reports a name") {
    const char *name = active_name();
    CHECK((std::strcmp(name, "scalar") == 0 || std::strcmp(name, "avx2") == 0));
    const Ops &k = ops();
    double x[3] = {1.0, 2.0, 4.0};
    CHECK(k.sum(x, 3) == 7.0);
}
