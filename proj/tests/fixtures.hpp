#pragma once

#include "povmap/common.hpp"
#include "povmap/ingest.hpp"
#include "povmap/rng.hpp"

#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

// Shared hand-built fixtures for the unit suite. Everything is deterministic;
// no randomness unless a test passes its own Rng.
namespace fixtures {

inline std::vector<povmap::ingest::AssetSpec> asset_specs() {
    return {
        {"electricity", 2}, {"tv", 2},          {"fridge", 2},
        {"phone", 2},       {"car", 2},         {"bicycle", 2},
        {"water_source", 3}, {"toilet_type", 3}, {"floor_material", 4},
        {"rooms_per_person", 0},
    };
}

inline std::vector<std::string> demo_columns() {
    std::vector<std::string> cols;
    for (int i = 1; i <= 37; ++i) {
        cols.push_back("aud" + std::string(i < 10 ? "0" : "") + std::to_string(i));
    }
    return cols;
}

inline std::vector<std::string> poi_categories() {
    return {"school",      "hospital",   "clinic",     "pharmacy",  "market",
            "bank",        "atm",        "restaurant", "cafe",      "hotel",
            "police",      "fuel_station", "church",   "mosque",    "post_office",
            "library",     "stadium",    "park",       "supermarket", "bus_station",
            "university",  "courthouse", "cinema",     "townhall"};
}

// Small but complete snapshot: 6 surveyed clusters, 8 places, every optional
// layer except embeddings. Coordinates sit in a ~20 km box near (7.5, -12.3).
inline povmap::ingest::DatasetBundle tiny_bundle() {
    using namespace povmap::ingest;
    DatasetBundle b;
    b.country_code = "TS";
    b.assets = asset_specs();
    b.demographic_columns = demo_columns();
    b.poi_categories = poi_categories();

    b.clusters = {
        {"c01", {7.50, -12.30}, 2016, Settlement::urban},
        {"c02", {7.52, -12.28}, 2016, Settlement::rural},
        {"c03", {7.55, -12.35}, 2019, Settlement::rural},
        {"c04", {7.47, -12.25}, 2019, Settlement::urban},
        {"c05", {7.58, -12.31}, 2019, Settlement::rural},
        {"c06", {7.44, -12.38}, 2016, Settlement::rural},
    };

    int hh = 0;
    for (std::size_t ci = 0; ci < b.clusters.size(); ++ci) {
        for (int k = 0; k < 3; ++k) {
            HouseholdRow h;
            h.household_id = "h" + povmap::zero_pad(++hh, 3);
            h.cluster_id = b.clusters[ci].cluster_id;
            const double wealth = static_cast<double>(ci) / 5.0; // 0..1 by cluster
            const int rich = wealth > 0.5 ? 1 : 0;
            h.assets = {
                static_cast<double>(rich),
                static_cast<double>(k > 0 ? rich : 0),
                static_cast<double>(k > 1 ? rich : 0),
                static_cast<double>(rich),
                0.0,
                1.0,
                std::floor(wealth * 2.999),
                std::floor(wealth * 2.999),
                std::floor(wealth * 3.999),
                0.25 + wealth + 0.1 * k,
            };
            b.households.push_back(std::move(h));
        }
    }

    b.places = {
        {"p01", {7.501, -12.301}, PlaceKind::city},
        {"p02", {7.521, -12.279}, PlaceKind::village},
        {"p03", {7.551, -12.349}, PlaceKind::hamlet},
        {"p04", {7.469, -12.251}, PlaceKind::town},
        {"p05", {7.581, -12.311}, PlaceKind::village},
        {"p06", {7.441, -12.379}, PlaceKind::isolated_dwelling},
        {"p07", {7.49, -12.33}, PlaceKind::neighborhood},
        {"p08", {7.56, -12.27}, PlaceKind::village},
    };

    std::vector<PopulationTile> pop;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 3; ++j) {
            pop.push_back({{7.44 + 0.04 * i, -12.38 + 0.05 * j},
                           100.0 + 50.0 * i + 20.0 * j});
        }
    }
    b.population_tiles = std::move(pop);

    b.mobility_tiles = std::vector<MobilityTile>{
        {"t1", {7.50, -12.30}},
        {"t2", {7.54, -12.33}},
        {"t3", {7.46, -12.27}},
        {"t4", {7.57, -12.29}},
    };
    b.movement_edges = std::vector<MovementEdge>{
        {"t1", "t2", 30}, {"t2", "t1", 12}, {"t1", "t3", 8},
        {"t3", "t4", 5},  {"t4", "t1", 9},  {"t1", "t1", 40},
    };

    DemographicsTable demo;
    demo.columns = b.demographic_columns;
    const char *demo_ids[] = {"c01", "c02", "c03", "c04", "c05", "p01", "p02", "p04"};
    int di = 0;
    for (const char *id : demo_ids) {
        DemographicsTable::Row r;
        r.location_id = id;
        for (int c = 0; c < 37; ++c) {
            r.values.push_back(10.0 * (di + 1) + c);
        }
        if (di % 3 == 1) r.values[5] = std::nan(""); // sprinkle missing cells
        ++di;
        demo.rows.push_back(std::move(r));
    }
    b.demographics = std::move(demo);

    b.poi_points = std::vector<PoiPoint>{
        {{7.502, -12.302}, "school"},  {{7.503, -12.299}, "market"},
        {{7.522, -12.281}, "school"},  {{7.47, -12.252}, "hospital"},
        {{7.552, -12.348}, "church"},  {{7.505, -12.305}, "atm"},
    };
    b.road_segments = std::vector<RoadSegment>{
        {{7.49, -12.31}, {7.51, -12.29}},
        {{7.51, -12.29}, {7.53, -12.28}},
        {{7.50, -12.32}, {7.51, -12.29}},
    };
    b.building_points = std::vector<BuildingPoint>{
        {{7.5005, -12.3005}}, {{7.5010, -12.3010}}, {{7.521, -12.280}},
        {{7.551, -12.350}},   {{7.470, -12.250}},
    };
    b.cells = std::vector<CellRow>{
        {{7.500, -12.300}, "tw1"}, {{7.501, -12.301}, "tw1"},
        {{7.520, -12.280}, "tw2"}, {{7.550, -12.350}, "tw3"},
        {{7.470, -12.250}, "tw2"},
    };

    std::vector<NightlightPixel> nl;
    for (int year : {2016, 2019}) {
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 6; ++j) {
                const double rad =
                    (year == 2019 ? 1.5 : 1.0) * (i + j) * 2.0; // brighter later
                nl.push_back({{7.43 + 0.03 * i, -12.40 + 0.03 * j}, rad, year});
            }
        }
    }
    b.nightlight_pixels = std::move(nl);

    b.years = {2016, 2019};
    return b;
}

// Adds a deterministic 784-dim embedding row for every cluster and place.
inline void add_embeddings(povmap::ingest::DatasetBundle &b, std::uint64_t seed = 31) {
    using namespace povmap::ingest;
    povmap::Rng rng(seed);
    EmbeddingsTable emb;
    auto add = [&](const std::string &id) {
        EmbeddingsTable::Row r;
        r.location_id = id;
        r.values.resize(EmbeddingsTable::kDim);
        for (auto &v : r.values) v = rng.normal(0.0, 1.0);
        emb.rows.push_back(std::move(r));
    };
    for (const auto &c : b.clusters) add(c.cluster_id);
    for (const auto &p : b.places) add(p.place_id);
    b.embeddings = std::move(emb);
}

// NaN-aware equality for doubles coming back through a CSV round trip.
inline bool same_value(double a, double b) {
    return (std::isnan(a) && std::isnan(b)) || a == b;
}

inline bool same_demographics(const povmap::ingest::DemographicsTable &a,
                              const povmap::ingest::DemographicsTable &b) {
    if (a.columns != b.columns || a.rows.size() != b.rows.size()) return false;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        if (a.rows[i].location_id != b.rows[i].location_id) return false;
        if (a.rows[i].values.size() != b.rows[i].values.size()) return false;
        for (std::size_t j = 0; j < a.rows[i].values.size(); ++j) {
            if (!same_value(a.rows[i].values[j], b.rows[i].values[j])) return false;
        }
    }
    return true;
}

inline bool same_bundle(const povmap::ingest::DatasetBundle &a,
                        const povmap::ingest::DatasetBundle &b) {
    using namespace povmap::ingest;
    if (a.country_code != b.country_code || a.assets != b.assets ||
        a.poi_categories != b.poi_categories ||
        a.demographic_columns != b.demographic_columns || a.years != b.years) {
        return false;
    }
    if (a.households != b.households || a.clusters != b.clusters || a.places != b.places)
        return false;
    if (a.population_tiles != b.population_tiles) return false;
    if (a.mobility_tiles != b.mobility_tiles) return false;
    if (a.movement_edges != b.movement_edges) return false;
    if (a.poi_points != b.poi_points) return false;
    if (a.road_segments != b.road_segments) return false;
    if (a.building_points != b.building_points) return false;
    if (a.cells != b.cells) return false;
    if (a.nightlight_pixels != b.nightlight_pixels) return false;
    if (a.demographics.has_value() != b.demographics.has_value()) return false;
    if (a.demographics && !same_demographics(*a.demographics, *b.demographics))
        return false;
    if (a.embeddings.has_value() != b.embeddings.has_value()) return false;
    if (a.embeddings) {
        if (a.embeddings->rows.size() != b.embeddings->rows.size()) return false;
        for (std::size_t i = 0; i < a.embeddings->rows.size(); ++i) {
            if (a.embeddings->rows[i].location_id != b.embeddings->rows[i].location_id ||
                a.embeddings->rows[i].values != b.embeddings->rows[i].values) {
                return false;
            }
        }
    }
    return true;
}

// Scratch directory under the system temp root, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string &tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("povmap_test_" + tag + "_" + std::to_string(++counter) + "_" +
                 std::to_string(::getpid()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;

    const std::filesystem::path &path() const { return path_; }

  private:
    std::filesystem::path path_;
};

} // namespace fixtures
