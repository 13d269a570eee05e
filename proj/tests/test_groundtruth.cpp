#include "doctest.h"

#include "povmap/common.hpp"
#include "povmap/groundtruth.hpp"
#include "povmap/rng.hpp"

#include "fixtures.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

using namespace povmap::groundtruth;
using povmap::Error;
using povmap::Rng;
namespace ingest = povmap::ingest;

namespace {

AssetMatrix matrix_of(std::vector<std::vector<double>> rows) {
    AssetMatrix m;
    const std::size_t k = rows.empty() ? 0 : rows[0].size();
    for (std::size_t j = 0; j < k; ++j) m.columns.push_back("a" + std::to_string(j));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        m.household_ids.push_back("h" + std::to_string(i));
        m.cluster_ids.push_back("c0");
        m.rows.push_back(std::move(rows[i]));
    }
    return m;
}

// ladder of increasingly wealthy households over the 10 fixture assets
AssetMatrix wealth_ladder(std::size_t n) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = static_cast<double>(i) / static_cast<double>(n - 1);
        rows.push_back({
            w > 0.2 ? 1.0 : 0.0,
            w > 0.4 ? 1.0 : 0.0,
            w > 0.6 ? 1.0 : 0.0,
            w > 0.5 ? 1.0 : 0.0,
            w > 0.8 ? 1.0 : 0.0,
            w > 0.3 ? 1.0 : 0.0,
            std::floor(w * 2.999),
            std::floor(w * 2.999),
            std::floor(w * 3.999),
            0.2 + 2.0 * w,
        });
    }
    return matrix_of(std::move(rows));
}

std::vector<std::size_t> kept_columns(const WeightSpec &w) {
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < w.col_std.size(); ++j) {
        if (w.col_std[j] != 0.0) kept.push_back(j);
    }
    return kept;
}

// correlation matrix over the kept columns, independent implementation
Eigen::MatrixXd kept_correlation(const AssetMatrix &m, const WeightSpec &w) {
    const auto kept = kept_columns(w);
    const std::size_t n = m.rows.size(), k = kept.size();
    Eigen::MatrixXd z(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < k; ++a) {
            z(i, a) = (m.rows[i][kept[a]] - w.col_mean[kept[a]]) / w.col_std[kept[a]];
        }
    }
    return z.transpose() * z / static_cast<double>(n);
}

} // namespace

TEST_CASE("asset matrix construction") {
    auto specs = fixtures::asset_specs();
    auto b = fixtures::tiny_bundle();
    auto m = build_asset_matrix(b.households, specs);
    CHECK(m.rows.size() == 18);
    CHECK(m.columns.size() == 10);
    CHECK(m.columns[0] == "electricity");
    CHECK(m.cluster_ids[0] == "c01");

    auto bad = b.households;
    bad[0].assets.pop_back();
    CHECK_THROWS_AS(build_asset_matrix(bad, specs), Error);
}

TEST_CASE("two perfectly correlated columns load equally") {
    // only columns 0 and 1 vary, and they vary together
    auto m = matrix_of({
        {0, 0, 1, 1, 1, 1, 1, 1, 1, 1},
        {1, 1, 1, 1, 1, 1, 1, 1, 1, 1},
        {0, 0, 1, 1, 1, 1, 1, 1, 1, 1},
        {1, 1, 1, 1, 1, 1, 1, 1, 1, 1},
    });
    auto w = compute_asset_weights(m);
    CHECK(w.loadings[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-10));
    CHECK(w.loadings[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-10));
    for (std::size_t j = 2; j < 10; ++j) CHECK(w.loadings[j] == 0.0);
}

TEST_CASE("constant columns are dropped with zero loading, others unaffected") {
    Rng rng(3);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 40; ++i) {
        const double w = rng.uniform(0.0, 1.0);
        rows.push_back({w, w + 0.3 * rng.next_normal(), 7.0,
                        w * 2.0 + 0.1 * rng.next_normal()});
    }
    auto with_const = matrix_of(std::move(rows));
    auto w1 = compute_asset_weights(with_const);
    CHECK(w1.loadings[2] == 0.0);
    CHECK(w1.col_std[2] == 0.0);

    AssetMatrix without;
    without.columns = {"a0", "a1", "a3"};
    for (const auto &r : with_const.rows) {
        without.household_ids.push_back("h");
        without.cluster_ids.push_back("c0");
        without.rows.push_back({r[0], r[1], r[3]});
    }
    auto w2 = compute_asset_weights(without);
    CHECK(w1.loadings[0] == doctest::Approx(w2.loadings[0]).epsilon(1e-12));
    CHECK(w1.loadings[1] == doctest::Approx(w2.loadings[1]).epsilon(1e-12));
    CHECK(w1.loadings[3] == doctest::Approx(w2.loadings[2]).epsilon(1e-12));
}

TEST_CASE("pca loadings match a dense eigensolver oracle") {
    Rng rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t n = 5 + static_cast<std::size_t>(rng.uniform_int(0, 45));
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> r;
            const double base = rng.next_normal();
            for (int j = 0; j < 10; ++j) {
                r.push_back(0.6 * base + rng.next_normal());
            }
            rows.push_back(std::move(r));
        }
        auto m = matrix_of(std::move(rows));
        auto w = compute_asset_weights(m);

        const auto kept = kept_columns(w);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kept_correlation(m, w));
        Eigen::VectorXd top = es.eigenvectors().col(static_cast<int>(kept.size()) - 1);
        // align oracle sign with ours
        double dot = 0.0;
        for (std::size_t a = 0; a < kept.size(); ++a) {
            dot += top(static_cast<int>(a)) * w.loadings[kept[a]];
        }
        if (dot < 0) top = -top;
        for (std::size_t a = 0; a < kept.size(); ++a) {
            CHECK(w.loadings[kept[a]] ==
                  doctest::Approx(top(static_cast<int>(a))).epsilon(1e-8));
        }
    }
}

TEST_CASE("pca loadings are unit norm and maximize projected variance") {
    auto m = wealth_ladder(60);
    auto w = compute_asset_weights(m);
    const auto kept = kept_columns(w);

    double norm = 0.0;
    for (double l : w.loadings) norm += l * l;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
    double sum = 0.0;
    for (double l : w.loadings) sum += l;
    CHECK(sum > 0.0);

    const auto corr = kept_correlation(m, w);
    auto projected_var = [&](const std::vector<double> &v) {
        double out = 0.0;
        for (std::size_t a = 0; a < kept.size(); ++a) {
            for (std::size_t b = 0; b < kept.size(); ++b) {
                out += v[a] * corr(static_cast<int>(a), static_cast<int>(b)) * v[b];
            }
        }
        return out;
    };
    std::vector<double> ours;
    for (std::size_t j : kept) ours.push_back(w.loadings[j]);
    const double best = projected_var(ours);

    Rng rng(23);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> v(kept.size());
        double vn = 0.0;
        for (auto &x : v) {
            x = rng.next_normal();
            vn += x * x;
        }
        vn = std::sqrt(vn);
        for (auto &x : v) x /= vn;
        CHECK(projected_var(v) <= best + 1e-9);
    }
}

TEST_CASE("degenerate matrices are rejected") {
    CHECK_THROWS_AS(compute_asset_weights(matrix_of({{1, 1, 1, 1, 1, 1, 1, 1, 1, 1}})),
                    Error);
    CHECK_THROWS_AS(compute_asset_weights(matrix_of({
                        {1, 1, 1, 1, 1, 1, 1, 1, 1, 1},
                        {1, 1, 1, 1, 1, 1, 1, 1, 1, 1},
                    })),
                    Error);
}

TEST_CASE("iwi endpoints, clipping, and invariances") {
    auto m = wealth_ladder(50);
    auto w = compute_asset_weights(m);
    auto scores = compute_iwi(m, w);
    REQUIRE(scores.size() == 50);

    // the ladder is monotone, so the poorest row hits 0 and the richest 100
    CHECK(scores.front() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(scores.back() == doctest::Approx(100.0).epsilon(1e-12));
    for (double s : scores) {
        CHECK(s >= 0.0);
        CHECK(s <= 100.0);
    }
    CHECK(std::is_sorted(scores.begin(), scores.end()));

    // identical households score identically
    auto m2 = matrix_of({{0, 1, 0, 1, 0, 1, 2, 1, 3, 0.7},
                         {0, 1, 0, 1, 0, 1, 2, 1, 3, 0.7},
                         {1, 1, 1, 1, 1, 1, 0, 0, 0, 1.4},
                         {0, 0, 0, 0, 0, 0, 1, 1, 1, 0.2}});
    auto w2 = compute_asset_weights(m2);
    auto s2 = compute_iwi(m2, w2);
    CHECK(s2[0] == s2[1]);

    // row order does not change per-household scores
    AssetMatrix shuffled = m;
    std::reverse(shuffled.rows.begin(), shuffled.rows.end());
    auto s_rev = compute_iwi(shuffled, w);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        CHECK(s_rev[scores.size() - 1 - i] == scores[i]);
    }

    // out-of-reference households clip to the [0, 100] ends
    AssetMatrix rich = m;
    rich.rows.assign(1, {1, 1, 1, 1, 1, 1, 2, 2, 3, 99.0});
    rich.household_ids.assign(1, "hx");
    rich.cluster_ids.assign(1, "c0");
    CHECK(compute_iwi(rich, w)[0] == 100.0);

    AssetMatrix other = m;
    other.columns[0] = "renamed";
    CHECK_THROWS_AS(compute_iwi(other, w), Error);
}

TEST_CASE("weight spec json round trip") {
    auto m = wealth_ladder(30);
    auto w = compute_asset_weights(m);
    auto back = weight_spec_from_json(weight_spec_to_json(w));
    CHECK(back.columns == w.columns);
    CHECK(back.loadings == w.loadings);
    CHECK(back.col_mean == w.col_mean);
    CHECK(back.col_std == w.col_std);
    CHECK(back.score_min == w.score_min);
    CHECK(back.score_max == w.score_max);
    CHECK(compute_iwi(m, back) == compute_iwi(m, w));

    CHECK_THROWS_AS(weight_spec_from_json("{"), Error);
    CHECK_THROWS_AS(weight_spec_from_json("{\"columns\":[\"a\"],\"loadings\":[1,2],"
                                          "\"col_mean\":[0],\"col_std\":[1],"
                                          "\"score_min\":0,\"score_max\":1}"),
                    Error);
}

TEST_CASE("cluster aggregation: mean and population sigma") {
    std::vector<ingest::ClusterRow> clusters = {
        {"cA", {0, 0}, 2016, ingest::Settlement::urban},
        {"cB", {0, 1}, 2019, ingest::Settlement::rural},
        {"cC", {0, 2}, 2019, ingest::Settlement::rural},
    };
    std::vector<std::string> ids = {"cA", "cA", "cB", "cB", "cC"};
    std::vector<double> scores = {10, 10, 0, 100, 42};
    std::vector<std::string> warnings;
    auto stats = aggregate_clusters(ids, scores, clusters, &warnings);
    REQUIRE(stats.size() == 3);
    CHECK(stats[0].mu == 10.0);
    CHECK(stats[0].sigma == 0.0);
    CHECK(stats[0].n_households == 2);
    CHECK(stats[0].settlement == ingest::Settlement::urban);
    CHECK(stats[0].year == 2016);
    CHECK(stats[1].mu == 50.0);
    CHECK(stats[1].sigma == 50.0); // population std, divisor n
    CHECK(stats[2].mu == 42.0);
    CHECK(stats[2].sigma == 0.0);
    CHECK(stats[2].n_households == 1);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("cC") != std::string::npos);

    // household order cannot matter
    std::vector<std::string> ids2 = {"cC", "cB", "cA", "cB", "cA"};
    std::vector<double> scores2 = {42, 100, 10, 0, 10};
    auto stats2 = aggregate_clusters(ids2, scores2, clusters);
    for (std::size_t i = 0; i < stats.size(); ++i) {
        CHECK(stats[i].mu == stats2[i].mu);
        CHECK(stats[i].sigma == stats2[i].sigma);
    }

    std::vector<ingest::ClusterRow> with_empty = clusters;
    with_empty.push_back({"cD", {0, 3}, 2019, ingest::Settlement::rural});
    CHECK_THROWS_AS(aggregate_clusters(ids, scores, with_empty), Error);
}

TEST_CASE("relocation prefers the cluster with fewer candidates") {
    using ingest::PlaceKind;
    using ingest::Settlement;
    // A sees only P1; B sees P1 and P2. A must win P1, B falls back to P2
    std::vector<ingest::ClusterRow> clusters = {
        {"A", {0.0, 0.0}, 2019, Settlement::rural},
        {"B", {0.0, 0.05}, 2019, Settlement::rural},
    };
    std::vector<ingest::PlaceRow> places = {
        {"P1", {0.0, 0.02}, PlaceKind::village},
        {"P2", {0.0, 0.095}, PlaceKind::village},
    };
    auto plan = relocate(clusters, places, RelocationMode::ruc);
    REQUIRE(plan.assignments.size() == 2);
    CHECK(plan.assignments[0].place_id == "P1");
    CHECK(plan.assignments[1].place_id == "P2");
    CHECK(plan.assignments[0].distance_km ==
          povmap::geo::haversine_km({0.0, 0.0}, {0.0, 0.02}));

    // without the contested first pick, B would have grabbed P1 (its nearest)
    CHECK(povmap::geo::haversine_km(clusters[1].pt, places[0].pt) <
          povmap::geo::haversine_km(clusters[1].pt, places[1].pt));
}

TEST_CASE("relocation modes and radii") {
    using ingest::PlaceKind;
    using ingest::Settlement;
    std::vector<ingest::ClusterRow> clusters = {
        {"u1", {0.0, 0.0}, 2019, Settlement::urban},
        {"r1", {0.2, 0.0}, 2019, Settlement::rural},
        {"r2", {0.5, 0.0}, 2019, Settlement::rural}, // nearest village 10.5 km away
    };
    std::vector<ingest::PlaceRow> places = {
        {"city1", {0.005, 0.0}, PlaceKind::city},       // 0.56 km from u1
        {"vil1", {0.21, 0.0}, PlaceKind::village},      // 1.1 km from r1
        {"vil2", {0.595, 0.0}, PlaceKind::village},     // 10.56 km from r2
    };

    auto none = relocate(clusters, places, RelocationMode::none);
    for (const auto &a : none.assignments) CHECK(a.keeps_noisy());

    auto rc = relocate(clusters, places, RelocationMode::rc);
    CHECK(rc.assignments[0].keeps_noisy()); // rc never moves urban clusters
    CHECK(rc.assignments[1].place_id == "vil1");
    CHECK(rc.assignments[2].keeps_noisy()); // out of the 10 km radius

    auto ruc = relocate(clusters, places, RelocationMode::ruc);
    CHECK(ruc.assignments[0].place_id == "city1");
    CHECK(ruc.assignments[1].place_id == "vil1");
    CHECK(ruc.assignments[2].keeps_noisy());

    // urban cluster only matches urban places even when a village is closer
    std::vector<ingest::PlaceRow> rural_only = {{"v", {0.001, 0.0}, PlaceKind::village}};
    auto cross = relocate({clusters[0]}, rural_only, RelocationMode::ruc);
    CHECK(cross.assignments[0].keeps_noisy());
}

TEST_CASE("relocation is injective, radius-bounded, and deterministic") {
    using ingest::PlaceKind;
    using ingest::Settlement;
    Rng rng(400);
    std::vector<ingest::ClusterRow> clusters;
    std::vector<ingest::PlaceRow> places;
    for (int i = 0; i < 60; ++i) {
        clusters.push_back({"c" + povmap::zero_pad(i, 3),
                            {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)},
                            2019,
                            rng.uniform(0.0, 1.0) < 0.4 ? Settlement::urban
                                                        : Settlement::rural});
    }
    const PlaceKind kinds[] = {PlaceKind::city,   PlaceKind::town,
                               PlaceKind::neighborhood, PlaceKind::village,
                               PlaceKind::hamlet, PlaceKind::isolated_dwelling};
    for (int i = 0; i < 35; ++i) {
        places.push_back({"p" + povmap::zero_pad(i, 3),
                          {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)},
                          kinds[rng.uniform_int(0, 5)]});
    }
    std::unordered_map<std::string, const ingest::PlaceRow *> by_id;
    for (const auto &p : places) by_id[p.place_id] = &p;

    for (auto mode : {RelocationMode::rc, RelocationMode::ruc}) {
        auto plan = relocate(clusters, places, mode);
        auto plan2 = relocate(clusters, places, mode);
        CHECK(plan == plan2);

        std::unordered_set<std::string> used;
        for (std::size_t i = 0; i < plan.assignments.size(); ++i) {
            const auto &a = plan.assignments[i];
            CHECK(a.cluster_id == clusters[i].cluster_id);
            if (a.keeps_noisy()) continue;
            CHECK(used.insert(a.place_id).second); // injective over places
            const auto &pl = *by_id.at(a.place_id);
            const bool urban = clusters[i].settlement == Settlement::urban;
            CHECK(ingest::is_urban(pl.kind) == urban);
            const double limit = urban ? kUrbanRadiusKm : kRuralRadiusKm;
            CHECK(a.distance_km <= limit);
            CHECK(a.distance_km == povmap::geo::haversine_km(clusters[i].pt, pl.pt));
            if (mode == RelocationMode::rc) CHECK(!urban);
        }
    }
}

TEST_CASE("apply_relocation moves assigned clusters only") {
    using ingest::PlaceKind;
    using ingest::Settlement;
    std::vector<ingest::ClusterRow> clusters = {
        {"A", {0.0, 0.0}, 2019, Settlement::rural},
        {"B", {1.0, 1.0}, 2019, Settlement::rural},
    };
    std::vector<ingest::PlaceRow> places = {{"P", {0.01, 0.01}, PlaceKind::village}};
    auto plan = relocate(clusters, places, RelocationMode::ruc);
    auto moved = apply_relocation(clusters, places, plan);
    CHECK(moved[0].pt == places[0].pt);
    CHECK(moved[1].pt == clusters[1].pt);

    fixtures::TempDir dir("reloc");
    write_relocation_csv(plan, dir.path() / "plan.csv");
    std::ifstream in(dir.path() / "plan.csv");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    CHECK(text.find("cluster_id,place_id,distance_km") != std::string::npos);
    CHECK(text.find("A,P,") != std::string::npos);
    CHECK(text.find("B,keep_noisy,") != std::string::npos);
}

TEST_CASE("gini oracle values and properties") {
    CHECK(gini({5, 5, 5, 5}) == 0.0);
    CHECK(gini({0, 100}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(gini({1, 2, 3, 4}) == doctest::Approx(0.25).epsilon(1e-12));

    Rng rng(9);
    std::vector<double> x;
    for (int i = 0; i < 200; ++i) x.push_back(rng.uniform(0.0, 50.0));
    const double g = gini(x);
    CHECK(g > 0.0);
    CHECK(g < 1.0);
    std::vector<double> scaled = x;
    for (auto &v : scaled) v *= 3.7;
    CHECK(gini(scaled) == doctest::Approx(g).epsilon(1e-12));

    CHECK_THROWS_AS(gini({0, 0, 0}), Error);
    CHECK_THROWS_AS(gini({}), Error);
    CHECK_THROWS_AS(gini({1, -1}), Error);
}

TEST_CASE("equal width discretization") {
    std::vector<double> v = {0, 5, 15, 25, 35, 45, 50, 55, 65, 75, 85, 95, 100};
    auto bins = discretize_equal_width(v, 10);
    CHECK(bins[0] == 0);
    CHECK(bins[6] == 5);  // 50.0 in bin 5
    CHECK(bins[11] == 9); // 95
    CHECK(bins[12] == 9); // max folds into the last bin

    auto constant = discretize_equal_width({7, 7, 7}, 10);
    CHECK(constant == std::vector<int>{0, 0, 0});

    CHECK_THROWS_AS(discretize_equal_width({1, 2}, 1), Error);
    CHECK(discretize_equal_width({}, 10).empty());

    // every bin index stays in range on random data
    Rng rng(31);
    std::vector<double> r;
    for (int i = 0; i < 500; ++i) r.push_back(rng.normal(50, 20));
    for (int b : discretize_equal_width(r, 10)) {
        CHECK(b >= 0);
        CHECK(b <= 9);
    }
}
