#include <doctest.h>

#include "fixtures.hpp"
#include "povmap/common.hpp"
#include "povmap/gbrt.hpp"
#include "povmap/mapgen.hpp"
#include "povmap/pipeline.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

using namespace povmap;
using namespace povmap::mapgen;

namespace {

template <typename F> std::string kind_of(F &&f) {
    try {
        f();
    } catch (const Error &e) {
        return std::string(e.kind());
    }
    return "";
}

gbrt::GBRTEnsemble tiny_model(const ingest::DatasetBundle &b) {
    const pipeline::ModelingData md =
        pipeline::build_modeling_data(b, groundtruth::RelocationMode::none);
    std::vector<std::size_t> all(md.stats.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const gbrt::Dataset train = pipeline::make_dataset(md, all);
    gbrt::Hyperparams hp;
    hp.n_trees = 5;
    hp.max_depth = 2;
    hp.min_samples_leaf = 1;
    return gbrt::fit(train, hp);
}

PovertyMap two_entry_map() {
    PovertyMap map;
    map.model_fingerprint = "00ff00ff00ff00ff";
    map.timestamp = "2024-05-01T10:00:00Z";
    MapEntry a;
    a.place_id = "pa";
    a.pt = {7.512345678, -12.398765432};
    a.settlement = ingest::Settlement::urban;
    a.mu = 61.234567891;
    a.sigma = 12.345678912;
    a.population = 1234.5;
    MapEntry b;
    b.place_id = "pb";
    b.pt = {7.6, -12.1};
    b.settlement = ingest::Settlement::rural;
    b.mu = 23.0;
    b.sigma = 8.25;
    b.population = std::numeric_limits<double>::quiet_NaN();
    map.entries = {a, b};
    return map;
}

int count_of(const std::string &hay, const std::string &needle) {
    int n = 0;
    for (std::size_t at = hay.find(needle); at != std::string::npos;
         at = hay.find(needle, at + needle.size())) {
        ++n;
    }
    return n;
}

double svg_attr(const std::string &svg, const std::string &name) {
    const std::string key = name + "=\"";
    const std::size_t at = svg.find(key);
    REQUIRE(at != std::string::npos);
    const std::size_t end = svg.find('"', at + key.size());
    return parse_double(svg.substr(at + key.size(), end - at - key.size()));
}

} // namespace

TEST_SUITE("mapgen") {

    TEST_CASE("fingerprint is stable and model-specific") {
        const ingest::DatasetBundle b = fixtures::tiny_bundle();
        const gbrt::GBRTEnsemble m = tiny_model(b);
        const std::string fp = model_fingerprint(m);
        CHECK(fp.size() == 16);
        CHECK(fp.find_first_not_of("0123456789abcdef") == std::string::npos);
        CHECK(model_fingerprint(m) == fp);

        gbrt::GBRTEnsemble other = m;
        other.base[0] += 1.0;
        CHECK(model_fingerprint(other) != fp);
    }

    TEST_CASE("every place gets a bounded prediction") {
        const ingest::DatasetBundle b = fixtures::tiny_bundle();
        const gbrt::GBRTEnsemble m = tiny_model(b);
        const PovertyMap map = infer_places(m, b);

        REQUIRE(map.entries.size() == b.places.size());
        CHECK(map.model_fingerprint == model_fingerprint(m));
        CHECK(map.timestamp.empty());
        for (std::size_t i = 0; i < map.entries.size(); ++i) {
            const MapEntry &e = map.entries[i];
            CHECK(e.place_id == b.places[i].place_id);
            CHECK(e.pt == b.places[i].pt);
            CHECK(e.settlement == ingest::settlement_of(b.places[i].kind));
            CHECK(e.mu >= 0.0);
            CHECK(e.mu <= 100.0);
            CHECK(e.sigma >= 0.0);
            CHECK(e.population >= 0.0); // the fixture has a population layer
        }

        // idempotent for a fixed model and bundle
        CHECK(infer_places(m, b) == map);
    }

    TEST_CASE("embedding columns missing at places are routed, not fatal") {
        ingest::DatasetBundle b = fixtures::tiny_bundle();
        fixtures::add_embeddings(b);
        const gbrt::GBRTEnsemble m = tiny_model(b);
        REQUIRE(m.columns.size() == 957);
        const PovertyMap map = infer_places(m, b);
        REQUIRE(map.entries.size() == b.places.size());
        for (const MapEntry &e : map.entries) {
            CHECK(std::isfinite(e.mu));
            CHECK(std::isfinite(e.sigma));
        }
    }

    TEST_CASE("duplicate place ids are rejected") {
        ingest::DatasetBundle b = fixtures::tiny_bundle();
        b.places.push_back(b.places.front());
        const gbrt::GBRTEnsemble m = tiny_model(fixtures::tiny_bundle());
        CHECK(kind_of([&] { infer_places(m, b); }) == "DuplicatePlace");
    }

    TEST_CASE("no places gives an empty map") {
        ingest::DatasetBundle b = fixtures::tiny_bundle();
        const gbrt::GBRTEnsemble m = tiny_model(b);
        b.places.clear();
        const PovertyMap map = infer_places(m, b);
        CHECK(map.entries.empty());
        CHECK(map.model_fingerprint == model_fingerprint(m));
    }

    TEST_CASE("missing population layer turns into blank populations") {
        ingest::DatasetBundle b = fixtures::tiny_bundle();
        const gbrt::GBRTEnsemble m = tiny_model(b);
        b.population_tiles.reset();
        const PovertyMap map = infer_places(m, b);
        REQUIRE(map.entries.size() == b.places.size());
        for (const MapEntry &e : map.entries) CHECK(std::isnan(e.population));

        const csv::Table t = map_table(map);
        for (const auto &row : t.rows) CHECK(row[6] == "");
    }

    TEST_CASE("geojson document has the contracted shape") {
        const PovertyMap map = two_entry_map();
        const nlohmann::json doc = export_geojson(map);

        CHECK(doc["type"] == "FeatureCollection");
        CHECK(doc["metadata"]["model"] == "00ff00ff00ff00ff");
        CHECK(doc["metadata"]["generated"] == "2024-05-01T10:00:00Z");
        REQUIRE(doc["features"].size() == 2);

        const nlohmann::json &f = doc["features"][0];
        CHECK(f["type"] == "Feature");
        CHECK(f["id"] == "pa");
        CHECK(f["geometry"]["type"] == "Point");
        // (lon, lat) order
        CHECK(f["geometry"]["coordinates"][0].get<double>() == map.entries[0].pt.lon);
        CHECK(f["geometry"]["coordinates"][1].get<double>() == map.entries[0].pt.lat);
        CHECK(f["properties"].size() == 4);
        CHECK(f["properties"]["mu"].get<double>() == map.entries[0].mu);
        CHECK(f["properties"]["sigma"].get<double>() == map.entries[0].sigma);
        CHECK(f["properties"]["settlement"] == "urban");
        CHECK(f["properties"]["population"].get<double>() == 1234.5);
    }

    TEST_CASE("geojson round trips through text exactly") {
        const PovertyMap map = two_entry_map();
        const std::string text = export_geojson(map).dump();
        const PovertyMap back = import_geojson(nlohmann::json::parse(text));

        CHECK(back.model_fingerprint == map.model_fingerprint);
        CHECK(back.timestamp == map.timestamp);
        REQUIRE(back.entries.size() == 2);
        for (std::size_t i = 0; i < 2; ++i) {
            const MapEntry &a = map.entries[i];
            const MapEntry &b = back.entries[i];
            CHECK(b.place_id == a.place_id);
            CHECK(b.settlement == a.settlement);
            CHECK(b.pt.lat == doctest::Approx(a.pt.lat).epsilon(1e-9));
            CHECK(b.pt.lon == doctest::Approx(a.pt.lon).epsilon(1e-9));
            CHECK(b.mu == doctest::Approx(a.mu).epsilon(1e-9));
            CHECK(b.sigma == doctest::Approx(a.sigma).epsilon(1e-9));
        }
        CHECK(back.entries[0].population == 1234.5);
        CHECK(std::isnan(back.entries[1].population)); // NaN went out as null

        // shortest-round-trip numerals make the trip exact, not just 1e-9
        CHECK(back.entries[0].mu == map.entries[0].mu);
        CHECK(back.entries[0].pt.lon == map.entries[0].pt.lon);
    }

    TEST_CASE("empty map exports an empty collection") {
        PovertyMap map;
        map.model_fingerprint = "deadbeefdeadbeef";
        const nlohmann::json doc = export_geojson(map);
        CHECK(doc["features"].empty());
        CHECK(doc["features"].is_array());
        const PovertyMap back = import_geojson(doc);
        CHECK(back.entries.empty());
        CHECK(back.model_fingerprint == "deadbeefdeadbeef");
    }

    TEST_CASE("malformed documents are rejected") {
        const nlohmann::json good = export_geojson(two_entry_map());

        nlohmann::json no_type = good;
        no_type.erase("type");
        CHECK(kind_of([&] { import_geojson(no_type); }) == "BadGeoJson");

        nlohmann::json wrong_type = good;
        wrong_type["type"] = "Feature";
        CHECK(kind_of([&] { import_geojson(wrong_type); }) == "BadGeoJson");

        nlohmann::json bad_feature = good;
        bad_feature["features"][0] = 5;
        CHECK(kind_of([&] { import_geojson(bad_feature); }) == "BadGeoJson");

        nlohmann::json bad_coords = good;
        bad_coords["features"][0]["geometry"]["coordinates"] = {1.0, 2.0, 3.0};
        CHECK(kind_of([&] { import_geojson(bad_coords); }) == "BadGeoJson");

        nlohmann::json bad_mu = good;
        bad_mu["features"][0]["properties"]["mu"] = "high";
        CHECK(kind_of([&] { import_geojson(bad_mu); }) == "BadGeoJson");

        nlohmann::json not_point = good;
        not_point["features"][0]["geometry"]["type"] = "LineString";
        CHECK(kind_of([&] { import_geojson(not_point); }) == "BadGeoJson");
    }

    TEST_CASE("geojson file round trip") {
        fixtures::TempDir dir("mapgen");
        const auto file = dir.path() / "map.geojson";
        const PovertyMap map = two_entry_map();
        write_geojson(file, map);
        const PovertyMap back = read_geojson(file);
        REQUIRE(back.entries.size() == 2);
        CHECK(back.entries[0].mu == map.entries[0].mu);
        CHECK(back.timestamp == map.timestamp);

        const auto missing = dir.path() / "nope.geojson";
        CHECK(kind_of([&] { read_geojson(missing); }) == "IoError");
    }

    TEST_CASE("csv mirror carries one row per place") {
        const PovertyMap map = two_entry_map();
        const csv::Table t = map_table(map);
        CHECK(t.header == std::vector<std::string>{"place_id", "lat", "lon", "settlement", "mu",
                                                   "sigma", "population"});
        REQUIRE(t.rows.size() == 2);
        CHECK(t.rows[0][0] == "pa");
        CHECK(t.rows[0][3] == "urban");
        CHECK(parse_double(t.rows[0][4]) == map.entries[0].mu);
        CHECK(t.rows[1][6] == ""); // NaN population
    }

    TEST_CASE("scatter draws one glyph per point and a curve per group") {
        const std::vector<double> mu{10.0, 20.0, 30.0};
        const std::vector<double> sigma{2.0, 5.0, 4.0};
        const std::string svg = render_scatter(mu, sigma, {false, false, false});

        CHECK(count_of(svg, "<circle") == 3);
        CHECK(count_of(svg, "class=\"pt-rural\"") >= 3);
        CHECK(count_of(svg, "class=\"fit-rural\"") == 1);
        CHECK(count_of(svg, "class=\"fit-urban\"") == 0);
        CHECK(svg.find("</svg>") != std::string::npos);

        // deterministic byte for byte
        CHECK(render_scatter(mu, sigma, {false, false, false}) == svg);
    }

    TEST_CASE("scatter fits both groups when both have enough spread") {
        std::vector<double> mu, sigma;
        std::vector<bool> urban;
        for (int i = 0; i < 5; ++i) {
            mu.push_back(20.0 + 10.0 * i);
            sigma.push_back(5.0 + 0.1 * i * i);
            urban.push_back(false);
            mu.push_back(50.0 + 8.0 * i);
            sigma.push_back(9.0 - 0.2 * i);
            urban.push_back(true);
        }
        const std::string svg = render_scatter(mu, sigma, urban);
        CHECK(count_of(svg, "<circle") == 10);
        CHECK(count_of(svg, "class=\"fit-rural\"") == 1);
        CHECK(count_of(svg, "class=\"fit-urban\"") == 1);
    }

    TEST_CASE("a two-point group gets glyphs but no curve") {
        const std::string svg =
            render_scatter({10.0, 20.0, 30.0, 40.0, 50.0}, {1.0, 2.0, 3.0, 2.0, 1.0},
                           {true, true, false, false, false});
        CHECK(count_of(svg, "<circle") == 5);
        CHECK(count_of(svg, "class=\"fit-urban\"") == 0);
        CHECK(count_of(svg, "class=\"fit-rural\"") == 1);
    }

    TEST_CASE("axis ranges pad the data extent by five percent") {
        const std::vector<double> mu{10.0, 20.0, 50.0};
        const std::vector<double> sigma{2.0, 8.0, 4.0};
        const std::string svg = render_scatter(mu, sigma, {false, true, false});

        CHECK(svg_attr(svg, "data-x-min") == doctest::Approx(10.0 - 0.05 * 40.0).epsilon(1e-12));
        CHECK(svg_attr(svg, "data-x-max") == doctest::Approx(50.0 + 0.05 * 40.0).epsilon(1e-12));
        CHECK(svg_attr(svg, "data-y-min") == doctest::Approx(2.0 - 0.05 * 6.0).epsilon(1e-12));
        CHECK(svg_attr(svg, "data-y-max") == doctest::Approx(8.0 + 0.05 * 6.0).epsilon(1e-12));
    }

    TEST_CASE("single point pads by a unit instead of a zero span") {
        const std::string svg = render_scatter({40.0}, {7.0}, {true});
        CHECK(svg_attr(svg, "data-x-min") == 39.0);
        CHECK(svg_attr(svg, "data-x-max") == 41.0);
        CHECK(svg_attr(svg, "data-y-min") == 6.0);
        CHECK(svg_attr(svg, "data-y-max") == 8.0);
        CHECK(count_of(svg, "<circle") == 1);
    }

    TEST_CASE("scatter input validation") {
        CHECK(kind_of([] { render_scatter({}, {}, {}); }) == "EmptyMap");
        CHECK(kind_of([] { render_scatter({1.0}, {1.0, 2.0}, {true}); }) == "LengthMismatch");
        CHECK(kind_of([] {
                  render_scatter({std::numeric_limits<double>::quiet_NaN()}, {1.0}, {true});
              }) == "BadValue");

        PovertyMap empty;
        CHECK(kind_of([&] { render_scatter(empty); }) == "EmptyMap");
    }

    TEST_CASE("map overload matches the vector overload") {
        const PovertyMap map = two_entry_map();
        std::vector<double> mu, sigma;
        std::vector<bool> urban;
        for (const MapEntry &e : map.entries) {
            mu.push_back(e.mu);
            sigma.push_back(e.sigma);
            urban.push_back(e.settlement == ingest::Settlement::urban);
        }
        CHECK(render_scatter(map) == render_scatter(mu, sigma, urban));
    }
}
