#include "doctest.h"

#include "povmap/common.hpp"
#include "povmap/ingest.hpp"

#include "fixtures.hpp"

#include <fstream>
#include <functional>
#include <string>

using namespace povmap::ingest;
using povmap::Error;

namespace {

std::string slurp(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void spit(const std::filesystem::path &p, const std::string &text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string error_message(const std::function<void()> &fn) {
    try {
        fn();
    } catch (const Error &e) {
        return e.what();
    }
    FAIL("expected an Error");
    return {};
}

} // namespace

TEST_CASE("settlement and place kind mappings") {
    CHECK(settlement_from_string("urban") == Settlement::urban);
    CHECK_THROWS_AS(settlement_from_string("Urban"), Error);
    CHECK(to_string(PlaceKind::isolated_dwelling) == "isolated_dwelling");
    CHECK(place_kind_from_string("town") == PlaceKind::town);
    CHECK(is_urban(PlaceKind::city));
    CHECK(is_urban(PlaceKind::town));
    CHECK(is_urban(PlaceKind::neighborhood));
    CHECK(!is_urban(PlaceKind::village));
    CHECK(!is_urban(PlaceKind::hamlet));
    CHECK(!is_urban(PlaceKind::isolated_dwelling));
    CHECK(settlement_of(PlaceKind::hamlet) == Settlement::rural);
}

TEST_CASE("bundle round trip through disk is the identity") {
    auto b = fixtures::tiny_bundle();
    fixtures::add_embeddings(b);
    fixtures::TempDir dir("roundtrip");
    write_bundle(b, dir.path());
    auto back = load_bundle(dir.path());
    CHECK(fixtures::same_bundle(b, back));

    // and a second write of the loaded bundle produces identical bytes
    fixtures::TempDir dir2("roundtrip2");
    write_bundle(back, dir2.path());
    for (const char *f : {"households.csv", "clusters.csv", "places.csv",
                          "demographics.csv", "nightlight_2016.csv", "manifest.json"}) {
        CHECK(slurp(dir.path() / f) == slurp(dir2.path() / f));
    }
}

TEST_CASE("optional layers load as absent, not empty") {
    auto b = fixtures::tiny_bundle();
    b.embeddings.reset();
    b.demographics.reset();
    b.cells.reset();
    fixtures::TempDir dir("optional");
    write_bundle(b, dir.path());
    auto back = load_bundle(dir.path());
    CHECK(!back.embeddings.has_value());
    CHECK(!back.demographics.has_value());
    CHECK(!back.cells.has_value());
    CHECK(back.population_tiles.has_value());
    CHECK(back.years == std::set<int>{2016, 2019});
    CHECK(back.newest_year() == 2019);
}

TEST_CASE("schema errors are collected across rows and files") {
    auto b = fixtures::tiny_bundle();
    fixtures::TempDir dir("schema");
    write_bundle(b, dir.path());

    // asset answer outside its categorical domain (tv is binary)
    auto hh = slurp(dir.path() / "households.csv");
    hh += "h999,c01,1,7,0,1,0,1,2,2,3,0.5\n";
    // and a second bad row: malformed number
    hh += "h998,c01,1,0,0,1,0,1,2,2,3,abc\n";
    spit(dir.path() / "households.csv", hh);

    auto cl = slurp(dir.path() / "clusters.csv");
    cl += "c99,7.5,-12.3,2016,suburban\n";
    spit(dir.path() / "clusters.csv", cl);

    const std::string msg = error_message([&] { load_bundle(dir.path()); });
    CHECK(msg.find("SchemaError") != std::string::npos);
    CHECK(msg.find("3 malformed row(s)") != std::string::npos);
    CHECK(msg.find("households.csv:19") != std::string::npos);
    CHECK(msg.find("outside domain 0..1") != std::string::npos);
    CHECK(msg.find("households.csv:20") != std::string::npos);
    CHECK(msg.find("clusters.csv:7") != std::string::npos);
    CHECK(msg.find("suburban") != std::string::npos);
}

TEST_CASE("missing required layer") {
    auto b = fixtures::tiny_bundle();
    fixtures::TempDir dir("required");
    write_bundle(b, dir.path());
    auto manifest = slurp(dir.path() / "manifest.json");
    const auto pos = manifest.find("\"places\": \"places.csv\",");
    REQUIRE(pos != std::string::npos);
    manifest.erase(pos, std::string("\"places\": \"places.csv\",").size());
    spit(dir.path() / "manifest.json", manifest);
    const std::string msg = error_message([&] { load_bundle(dir.path()); });
    CHECK(msg.find("MissingRequiredLayer") != std::string::npos);
    CHECK(msg.find("places") != std::string::npos);
}

TEST_CASE("dangling references are rejected") {
    auto b = fixtures::tiny_bundle();
    b.households[0].cluster_id = "ghost";
    CHECK_THROWS_AS(validate_bundle(b), Error);
    const std::string msg = error_message([&] { validate_bundle(b); });
    CHECK(msg.find("DanglingReference") != std::string::npos);
    CHECK(msg.find("ghost") != std::string::npos);

    auto b2 = fixtures::tiny_bundle();
    (*b2.movement_edges)[0].tile_from = "t999";
    CHECK_THROWS_AS(validate_bundle(b2), Error);

    auto b3 = fixtures::tiny_bundle();
    b3.demographics->rows[0].location_id = "nowhere";
    CHECK_THROWS_AS(validate_bundle(b3), Error);
}

TEST_CASE("validation report counts layers, years, and settlements") {
    auto b = fixtures::tiny_bundle();
    auto rep = validate_bundle(b);
    CHECK(rep.layer_counts.at("households") == 18);
    CHECK(rep.layer_counts.at("clusters") == 6);
    CHECK(rep.layer_counts.at("places") == 8);
    CHECK(rep.layer_counts.at("nightlight_pixels") == 72);
    CHECK(rep.layer_counts.count("embeddings") == 0);
    CHECK(rep.clusters_per_year.at(2016) == 3);
    CHECK(rep.clusters_per_year.at(2019) == 3);
    CHECK(rep.urban_clusters == 2);
    CHECK(rep.rural_clusters == 4);
    CHECK(rep.warnings.empty());
    CHECK(rep.to_string().find("rural") != std::string::npos);

    // validation is pure
    auto b2 = fixtures::tiny_bundle();
    validate_bundle(b2);
    CHECK(fixtures::same_bundle(b, b2));
}

TEST_CASE("empty movement table warns about mobility features") {
    auto b = fixtures::tiny_bundle();
    b.movement_edges = std::vector<MovementEdge>{};
    auto rep = validate_bundle(b);
    bool found = false;
    for (const auto &w : rep.warnings) {
        if (w.find("mobility features will be distance-only/missing") != std::string::npos) {
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("manifest validation") {
    auto b = fixtures::tiny_bundle();
    fixtures::TempDir dir("manifest");
    write_bundle(b, dir.path());
    auto m = read_manifest(dir.path() / "manifest.json");
    CHECK(m.country_code == "TS");
    CHECK(m.assets.size() == 10);
    CHECK(m.demographic_columns.size() == 37);
    CHECK(m.poi_categories.size() == 24);
    CHECK(m.layer_files.at("nightlight_pixels").size() == 2);

    m.demographic_columns.pop_back();
    CHECK_THROWS_AS(write_manifest(m, dir.path() / "bad.json"), Error);

    auto m2 = read_manifest(dir.path() / "manifest.json");
    m2.layer_files["mystery_layer"] = {"x.csv"};
    CHECK_THROWS_AS(write_manifest(m2, dir.path() / "bad.json"), Error);

    spit(dir.path() / "broken.json", "{ not json");
    CHECK_THROWS_AS(read_manifest(dir.path() / "broken.json"), Error);
}
