#include "fixtures.hpp"

#include "povmap/common.hpp"
#include "povmap/evalreport.hpp"
#include "povmap/features.hpp"
#include "povmap/gbrt.hpp"
#include "povmap/groundtruth.hpp"
#include "povmap/ingest.hpp"
#include "povmap/synthkit.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace povmap;

namespace {

synthkit::SynthSpec small_spec(std::uint64_t seed = 7) {
    synthkit::SynthSpec s;
    s.n_clusters = 60;
    s.n_places = 20;
    s.seed = seed;
    return s;
}

double pop_var_of(const std::vector<double> &v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= double(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / double(v.size());
}

/// per-cluster wealth stats through the real ground-truth path
std::vector<groundtruth::IWIStats> realized_stats(const ingest::DatasetBundle &b) {
    const auto m = groundtruth::build_asset_matrix(b.households, b.assets);
    const auto w = groundtruth::compute_asset_weights(m);
    const auto scores = groundtruth::compute_iwi(m, w);
    return groundtruth::aggregate_clusters(m.cluster_ids, scores, b.clusters);
}

std::string slurp(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(bool(in));
    return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_SUITE("synthkit") {

TEST_CASE("spec validation rejects out-of-range knobs") {
    auto bad = [](auto mutate) {
        synthkit::SynthSpec s;
        s.n_clusters = 20;
        mutate(s);
        CHECK_THROWS_WITH_AS(synthkit::generate(s), doctest::Contains(""),
                             Error);
        try {
            synthkit::generate(s);
        } catch (const Error &e) {
            CHECK(e.kind() == "BadConfig");
        }
    };
    bad([](auto &s) { s.n_clusters = 9; });
    bad([](auto &s) { s.n_years = 3; });
    bad([](auto &s) { s.urban_share = 1.5; });
    bad([](auto &s) { s.mu_noise_ratio = 1.0; });
    bad([](auto &s) { s.r_target = 0.0; });
    bad([](auto &s) { s.wealth_band_lo = 0.7; s.wealth_band_hi = 0.3; });
    bad([](auto &s) { s.wealth_band_hi = 1.2; });
    bad([](auto &s) { s.country_code.clear(); });
    bad([](auto &s) { s.densities.households_per_cluster = 1; });
    bad([](auto &s) { s.densities.nightlight_pixels_per_site = 0; });
    bad([](auto &s) { s.densities.max_poi_count = 0; });
    bad([](auto &s) { s.densities.max_cell_count = 0; });
}

TEST_CASE("generation is deterministic down to the written files") {
    const auto spec = small_spec(41);
    auto a = synthkit::generate(spec);
    auto b = synthkit::generate(spec);

    CHECK(synthkit::record_to_json(a.record).dump() ==
          synthkit::record_to_json(b.record).dump());

    fixtures::TempDir da("synth_a"), db("synth_b");
    ingest::write_bundle(a.bundle, da.path());
    ingest::write_bundle(b.bundle, db.path());

    std::vector<std::string> names;
    for (const auto &e : std::filesystem::directory_iterator(da.path()))
        names.push_back(e.path().filename().string());
    CHECK(names.size() >= 10);
    for (const auto &n : names) {
        CAPTURE(n);
        CHECK(slurp(da.path() / n) == slurp(db.path() / n));
        CHECK(std::filesystem::exists(db.path() / n));
    }
}

TEST_CASE("generated bundle survives a write and load round trip") {
    auto r = synthkit::generate(small_spec(3));
    fixtures::TempDir dir("synth_rt");
    ingest::write_bundle(r.bundle, dir.path());
    const auto back = ingest::load_bundle(dir.path());

    CHECK(back.clusters.size() == 60);
    CHECK(back.places.size() == 20);
    CHECK(back.households.size() == 60 * 25);
    CHECK(back.population_tiles->size() == 80);
    CHECK(back.mobility_tiles->size() == 81); // one hub node
    CHECK(back.movement_edges->size() == 160);
    CHECK(back.building_points->size() == 80);
    CHECK(back.road_segments->size() == 80);
    CHECK(back.nightlight_pixels->size() == 80 * 5 * 2);
    CHECK(back.demographics->rows.size() == 80);
    CHECK(back.years == std::set<int>{2016, 2019});

    const auto report = ingest::validate_bundle(back);
    CHECK(report.urban_clusters + report.rural_clusters == 60);
}

TEST_CASE("settlement shares, years and place kinds follow the spec") {
    auto spec = small_spec(9);
    spec.urban_share = 0.0;
    auto rural = synthkit::generate(spec);
    for (const auto &c : rural.bundle.clusters)
        CHECK(c.settlement == ingest::Settlement::rural);
    for (const auto &p : rural.bundle.places)
        CHECK_FALSE(ingest::is_urban(p.kind));

    spec.urban_share = 1.0;
    auto urban = synthkit::generate(spec);
    for (const auto &c : urban.bundle.clusters)
        CHECK(c.settlement == ingest::Settlement::urban);
    for (const auto &p : urban.bundle.places)
        CHECK(ingest::is_urban(p.kind));

    spec.urban_share = 0.35;
    spec.n_years = 1;
    auto one = synthkit::generate(spec);
    CHECK(one.bundle.years == std::set<int>{2019});

    std::size_t n2016 = 0;
    auto two = synthkit::generate(small_spec(9));
    for (const auto &c : two.bundle.clusters) n2016 += c.year == 2016;
    CHECK(n2016 == 30);
}

TEST_CASE("planted signals come back exactly through the extractors") {
    auto r = synthkit::generate(small_spec(13));
    const auto locs = features::cluster_locations(r.bundle.clusters);
    const auto m = features::assemble(locs, r.bundle, {});

    REQUIRE(r.record.planted_columns.size() == 6);
    std::array<std::size_t, 6> idx{};
    for (std::size_t k = 0; k < 6; ++k)
        idx[k] = m.col(r.record.planted_columns[k]);

    const double max_poi = r.record.spec.densities.max_poi_count;
    const double max_cell = r.record.spec.densities.max_cell_count;
    for (std::size_t i = 0; i < m.n_rows(); ++i) {
        const auto &row = m.values[i];
        // invert the physical scalings, then apply the wealth function; the
        // constants are frozen here on purpose
        const double u_pop = std::log(row[idx[0]] / 100.0) / std::log(50.0);
        const double u_mob = std::log(row[idx[1]] / 20.0) / std::log(100.0);
        const double u_demo = row[idx[2]] / 100.0;
        const double u_poi = row[idx[3]] / max_poi;
        const double u_cell = row[idx[4]] / max_cell;
        const double u_night = row[idx[5]] / 40.0;
        const double f = 5.0 + 22.0 * u_pop + 7.0 * u_mob +
                         16.0 * u_demo * u_demo + 11.0 * u_poi +
                         4.0 * u_cell + 30.0 * std::sqrt(u_night);
        CHECK(f == doctest::Approx(r.record.f_values[i]).epsilon(1e-9));
    }

    CHECK(r.record.f_offset == 5.0);
    CHECK(r.record.f_weights == std::array<double, 6>{22, 7, 16, 11, 4, 30});
}

TEST_CASE("noise levels are exact population quantities") {
    synthkit::SynthSpec spec;
    spec.n_clusters = 300;
    spec.n_places = 0;
    spec.seed = 11;
    auto r = synthkit::generate(spec);
    const auto &rec = r.record;

    // mu: variance splits exactly into signal + noise, so the optimum
    // rmse ratio is sqrt(mu_noise_ratio) by construction
    const double var_f = pop_var_of(rec.f_values);
    const double var_mu = pop_var_of(rec.mu_true);
    CHECK(var_mu ==
          doctest::Approx(var_f + rec.eta_mu * rec.eta_mu).epsilon(1e-9));
    const auto floor = synthkit::bayes_nrmse(rec);
    CHECK(floor[0] == doctest::Approx(std::sqrt(0.16)).epsilon(1e-12));

    // sigma: noise orthogonal to g keeps the variance split exact and the
    // mu-sigma correlation pinned at r_target
    std::vector<double> g(rec.mu_true.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = rec.g_coeffs[0] + rec.g_coeffs[1] * rec.mu_true[i] +
               rec.g_coeffs[2] * std::sqrt(std::max(rec.mu_true[i], 0.0));
    const double var_sigma = pop_var_of(rec.sigma_true);
    CHECK(var_sigma ==
          doctest::Approx(pop_var_of(g) + rec.eta_sigma * rec.eta_sigma)
              .epsilon(1e-9));
    CHECK(evalreport::pearson(rec.mu_true, rec.sigma_true) ==
          doctest::Approx(spec.r_target).epsilon(1e-9));
    CHECK(floor[1] > 0.4);
    CHECK(floor[1] < 1.0);

    for (double s : rec.sigma_true) CHECK(s > 0.0);
}

TEST_CASE("explicit mu noise raises the floor monotonically") {
    double prev = -1.0;
    for (double eta : {1.0, 3.0, 6.0}) {
        auto spec = small_spec(5);
        spec.mu_noise = eta;
        const auto floor = synthkit::bayes_nrmse(synthkit::generate(spec).record);
        CHECK(floor[0] > prev);
        prev = floor[0];
    }
}

TEST_CASE("zero noise makes wealth an exact function of the features") {
    auto spec = small_spec(21);
    spec.mu_noise_ratio = 0.0;
    auto r = synthkit::generate(spec);
    CHECK(r.record.eta_mu == 0.0);
    CHECK(r.record.mu_true == r.record.f_values);
    CHECK(synthkit::bayes_nrmse(r.record)[0] == 0.0);
}

TEST_CASE("unreachable r_target is refused") {
    auto spec = small_spec(2);
    spec.r_target = 0.9999;
    CHECK_THROWS_AS(synthkit::generate(spec), Error);
}

TEST_CASE("household sampling realizes the latent targets") {
    synthkit::SynthSpec spec;
    spec.n_clusters = 300;
    spec.n_places = 0;
    spec.seed = 17;
    auto r = synthkit::generate(spec);
    const auto stats = realized_stats(r.bundle);
    REQUIRE(stats.size() == r.record.mu_true.size());

    std::vector<double> mu_hat, sigma_hat;
    for (const auto &s : stats) {
        mu_hat.push_back(s.mu);
        sigma_hat.push_back(s.sigma);
    }
    // asset quantization plus the min-max rescale leave an affine image of
    // (mu, sigma); correlation is the scale-free recovery check
    CHECK(evalreport::pearson(mu_hat, r.record.mu_true) > 0.985);
    CHECK(evalreport::pearson(sigma_hat, r.record.sigma_true) > 0.85);
    const double r_realized = evalreport::pearson(mu_hat, sigma_hat);
    CHECK(r_realized > 0.5);
    CHECK(r_realized < 0.85);
}

TEST_CASE("urban sites are richer than rural ones") {
    auto spec = small_spec(23);
    spec.n_clusters = 200;
    auto r = synthkit::generate(spec);
    double urban_sum = 0.0, rural_sum = 0.0;
    std::size_t urban_n = 0, rural_n = 0;
    for (std::size_t i = 0; i < r.bundle.clusters.size(); ++i) {
        if (r.bundle.clusters[i].settlement == ingest::Settlement::urban) {
            urban_sum += r.record.f_values[i];
            ++urban_n;
        } else {
            rural_sum += r.record.f_values[i];
            ++rural_n;
        }
    }
    REQUIRE(urban_n > 10);
    REQUIRE(rural_n > 10);
    CHECK(urban_sum / double(urban_n) > rural_sum / double(rural_n) + 5.0);
}

TEST_CASE("narrow wealth band nests strictly inside the full one") {
    auto wide_spec = small_spec(7);
    wide_spec.n_clusters = 200;
    auto narrow_spec = small_spec(8);
    narrow_spec.n_clusters = 200;
    narrow_spec.wealth_band_lo = 0.30;
    narrow_spec.wealth_band_hi = 0.70;

    const auto wide = synthkit::generate(wide_spec).record.mu_true;
    const auto narrow = synthkit::generate(narrow_spec).record.mu_true;
    const auto [wlo, whi] = std::minmax_element(wide.begin(), wide.end());
    const auto [nlo, nhi] = std::minmax_element(narrow.begin(), narrow.end());
    CHECK(*nlo > *wlo);
    CHECK(*nhi < *whi);
}

TEST_CASE("embeddings extend the matrix to the full column count") {
    auto spec = small_spec(29);
    spec.n_clusters = 12;
    spec.n_places = 4;
    spec.with_embeddings = true;
    auto r = synthkit::generate(spec);
    REQUIRE(r.bundle.embeddings.has_value());
    CHECK(r.bundle.embeddings->rows.size() == 16);

    const auto m = features::assemble(
        features::cluster_locations(r.bundle.clusters), r.bundle, {});
    CHECK(m.n_cols() == 957);

    auto again = synthkit::generate(spec);
    CHECK(again.bundle.embeddings->rows[0].values ==
          r.bundle.embeddings->rows[0].values);
}

TEST_CASE("record json round trips and rejects damage") {
    auto r = synthkit::generate(small_spec(31));
    const auto doc = synthkit::record_to_json(r.record);
    const auto back = synthkit::record_from_json(doc);
    CHECK(back.spec == r.record.spec);
    CHECK(back.eta_mu == r.record.eta_mu);
    CHECK(back.eta_sigma == r.record.eta_sigma);
    CHECK(back.g_coeffs == r.record.g_coeffs);
    CHECK(back.f_weights == r.record.f_weights);
    CHECK(back.planted_columns == r.record.planted_columns);
    CHECK(back.cluster_ids == r.record.cluster_ids);
    CHECK(back.f_values == r.record.f_values);
    CHECK(back.mu_true == r.record.mu_true);
    CHECK(back.sigma_true == r.record.sigma_true);

    auto expect_bad = [](nlohmann::json j) {
        try {
            synthkit::record_from_json(j);
            FAIL("expected BadRecord");
        } catch (const Error &e) {
            CHECK(e.kind() == "BadRecord");
        }
    };
    expect_bad(nlohmann::json{{"format", "something"}});
    auto v = doc;
    v["version"] = 2;
    expect_bad(v);
    auto missing = doc;
    missing["wealth_model"].erase("eta_mu");
    expect_bad(missing);
    auto ragged = doc;
    ragged["clusters"]["mu"].get_ref<nlohmann::json::array_t &>().pop_back();
    expect_bad(ragged);

    fixtures::TempDir dir("synth_rec");
    const auto file = dir.path() / "record.json";
    synthkit::write_record(file, r.record);
    const auto from_file = synthkit::read_record(file);
    CHECK(from_file.mu_true == r.record.mu_true);
    CHECK_THROWS_AS(synthkit::read_record(dir.path() / "absent.json"), Error);
}

TEST_CASE("deep trees on noise-free wealth drive the train error down") {
    synthkit::SynthSpec spec;
    spec.n_clusters = 150;
    spec.n_places = 0;
    spec.seed = 37;
    spec.mu_noise_ratio = 0.0;
    auto r = synthkit::generate(spec);

    const auto stats = realized_stats(r.bundle);
    const auto m = features::assemble(
        features::cluster_locations(r.bundle.clusters), r.bundle, {});

    gbrt::Dataset d;
    d.columns = m.columns;
    d.rows = m.values;
    for (const auto &s : stats) d.targets.push_back({s.mu, s.sigma});
    d.weights.assign(stats.size(), 1.0);

    gbrt::Hyperparams hp;
    hp.n_trees = 300;
    hp.max_depth = 8;
    hp.learning_rate = 0.2;
    hp.min_samples_leaf = 1;
    hp.l2_leaf_reg = 0.0;
    hp.random_seed = 1;
    const auto model = gbrt::fit(d, hp);
    const auto pred = gbrt::predict(model, d.columns, d.rows);

    std::vector<double> truth, est;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        truth.push_back(d.targets[i][0]);
        est.push_back(pred[i][0]);
    }
    CHECK(evalreport::nrmse(est, truth) < 0.2);
}

TEST_CASE("importance ranking follows the planted weights") {
    synthkit::SynthSpec spec;
    spec.n_clusters = 400;
    spec.n_places = 0;
    spec.seed = 43;
    spec.urban_share = 0.0; // keep the settlement flag out of the signal
    spec.mu_noise_ratio = 0.0;
    spec.sigma_noise = 0.0;
    auto r = synthkit::generate(spec);

    const auto m = features::assemble(
        features::cluster_locations(r.bundle.clusters), r.bundle, {});
    gbrt::Dataset d;
    d.columns = m.columns;
    d.rows = m.values;
    for (std::size_t i = 0; i < r.record.mu_true.size(); ++i)
        d.targets.push_back({r.record.mu_true[i], r.record.sigma_true[i]});
    d.weights.assign(d.targets.size(), 1.0);

    gbrt::Hyperparams hp;
    hp.n_trees = 150;
    hp.max_depth = 4;
    hp.learning_rate = 0.15;
    hp.min_samples_leaf = 5;
    hp.random_seed = 2;
    const auto model = gbrt::fit(d, hp);
    const auto imp = gbrt::importance(model);
    REQUIRE(imp.size() == m.n_cols());

    std::map<std::string, double> by_source;
    for (std::size_t c = 0; c < m.n_cols(); ++c)
        by_source[m.sources[c]] += imp[c];

    CHECK(by_source["nightlight"] > by_source["population"]);
    CHECK(by_source["population"] > by_source["demographics"]);
    CHECK(by_source["demographics"] > by_source["infrastructure"]);
    CHECK(by_source["infrastructure"] > by_source["mobility"]);
    CHECK(by_source["mobility"] > by_source["connectivity"]);
}

} // TEST_SUITE
