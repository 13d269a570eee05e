#include "povmap/ingest.hpp"

#include "povmap/common.hpp"
#include "povmap/csv.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

namespace povmap::ingest {

using nlohmann::json;

std::string_view to_string(Settlement s) {
    return s == Settlement::urban ? "urban" : "rural";
}

Settlement settlement_from_string(std::string_view s) {
    if (s == "urban") return Settlement::urban;
    if (s == "rural") return Settlement::rural;
    throw Error("ParseError", "unknown settlement '" + std::string(s) + "'");
}

std::string_view to_string(PlaceKind k) {
    switch (k) {
    case PlaceKind::city: return "city";
    case PlaceKind::town: return "town";
    case PlaceKind::neighborhood: return "neighborhood";
    case PlaceKind::village: return "village";
    case PlaceKind::hamlet: return "hamlet";
    case PlaceKind::isolated_dwelling: return "isolated_dwelling";
    }
    return "?";
}

PlaceKind place_kind_from_string(std::string_view s) {
    if (s == "city") return PlaceKind::city;
    if (s == "town") return PlaceKind::town;
    if (s == "neighborhood") return PlaceKind::neighborhood;
    if (s == "village") return PlaceKind::village;
    if (s == "hamlet") return PlaceKind::hamlet;
    if (s == "isolated_dwelling") return PlaceKind::isolated_dwelling;
    throw Error("ParseError", "unknown place kind '" + std::string(s) + "'");
}

bool is_urban(PlaceKind k) {
    return k == PlaceKind::city || k == PlaceKind::town || k == PlaceKind::neighborhood;
}

std::string SchemaError::to_string() const {
    return file + ":" + std::to_string(row) + ": " + reason;
}

namespace {

constexpr const char *kLayerNames[] = {
    "households",      "clusters",      "places",          "population_tiles",
    "mobility_tiles",  "movement_edges", "demographics",   "poi_points",
    "road_segments",   "building_points", "cells",         "nightlight_pixels",
    "embeddings",
};

bool known_layer(const std::string &name) {
    for (const char *l : kLayerNames) {
        if (name == l) return true;
    }
    return false;
}

void check_manifest(const Manifest &m) {
    if (m.country_code.empty()) {
        throw Error("ManifestError", "country_code is empty");
    }
    if (m.assets.size() != kAssetCount) {
        throw Error("ManifestError", "expected 10 asset columns, got " +
                                         std::to_string(m.assets.size()));
    }
    if (m.demographic_columns.size() != kDemographicColumns) {
        throw Error("ManifestError", "expected 37 demographic columns, got " +
                                         std::to_string(m.demographic_columns.size()));
    }
    if (m.poi_categories.size() != kPoiCategories) {
        throw Error("ManifestError", "expected 24 POI categories, got " +
                                         std::to_string(m.poi_categories.size()));
    }
    std::unordered_set<std::string> seen;
    for (const auto &a : m.assets) {
        if (a.name.empty() || !seen.insert(a.name).second) {
            throw Error("ManifestError", "asset names must be unique and non-empty");
        }
        if (a.levels == 1 || a.levels < 0) {
            throw Error("ManifestError", "asset '" + a.name +
                                             "' levels must be 0 (continuous) or >= 2");
        }
    }
    seen.clear();
    for (const auto &c : m.demographic_columns) {
        if (c.empty() || !seen.insert(c).second) {
            throw Error("ManifestError", "demographic columns must be unique and non-empty");
        }
    }
    seen.clear();
    for (const auto &c : m.poi_categories) {
        if (c.empty() || !seen.insert(c).second) {
            throw Error("ManifestError", "POI categories must be unique and non-empty");
        }
    }
    for (const auto &[layer, files] : m.layer_files) {
        if (!known_layer(layer)) {
            throw Error("ManifestError", "unknown layer '" + layer + "'");
        }
        if (files.empty()) {
            throw Error("ManifestError", "layer '" + layer + "' lists no files");
        }
        if (layer != "nightlight_pixels" && files.size() != 1) {
            throw Error("ManifestError",
                        "layer '" + layer + "' must list exactly one file");
        }
    }
}

} // namespace

Manifest read_manifest(const std::filesystem::path &file) {
    std::ifstream in(file);
    if (!in) {
        throw Error("IoError", "cannot open " + file.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception &e) {
        throw Error("ManifestError", file.string() + ": " + e.what());
    }
    Manifest m;
    try {
        m.country_code = j.at("country_code").get<std::string>();
        for (const auto &[layer, v] : j.at("layers").items()) {
            if (v.is_string()) {
                m.layer_files[layer] = {v.get<std::string>()};
            } else {
                m.layer_files[layer] = v.get<std::vector<std::string>>();
            }
        }
        for (const auto &a : j.at("assets")) {
            m.assets.push_back(
                {a.at("name").get<std::string>(), a.at("levels").get<int>()});
        }
        m.demographic_columns =
            j.at("demographic_columns").get<std::vector<std::string>>();
        m.poi_categories = j.at("poi_categories").get<std::vector<std::string>>();
    } catch (const json::exception &e) {
        throw Error("ManifestError", file.string() + ": " + e.what());
    }
    check_manifest(m);
    return m;
}

void write_manifest(const Manifest &m, const std::filesystem::path &file) {
    check_manifest(m);
    json j;
    j["country_code"] = m.country_code;
    json layers = json::object();
    for (const auto &[layer, files] : m.layer_files) {
        if (files.size() == 1) {
            layers[layer] = files[0];
        } else {
            layers[layer] = files;
        }
    }
    j["layers"] = layers;
    json assets = json::array();
    for (const auto &a : m.assets) {
        assets.push_back({{"name", a.name}, {"levels", a.levels}});
    }
    j["assets"] = assets;
    j["demographic_columns"] = m.demographic_columns;
    j["poi_categories"] = m.poi_categories;
    std::ofstream out(file);
    if (!out) {
        throw Error("IoError", "cannot write " + file.string());
    }
    out << j.dump(2) << "\n";
}

namespace {

// Per-file parsing context; collects schema errors instead of throwing so a
// load reports every malformed row at once.
struct Ctx {
    const csv::Table &t;
    std::vector<SchemaError> &errs;
    std::size_t row = 0; // 1-based data row

    void fail(std::string reason) {
        errs.push_back({t.path, row, std::move(reason)});
    }
};

bool check_header(Ctx &ctx, const std::vector<std::string> &want) {
    if (ctx.t.header != want) {
        std::string msg = "header mismatch, expected:";
        for (const auto &w : want) {
            msg += ' ';
            msg += w;
        }
        ctx.errs.push_back({ctx.t.path, 0, msg});
        return false;
    }
    return true;
}

bool row_width_ok(Ctx &ctx, const std::vector<std::string> &row) {
    if (row.size() != ctx.t.header.size()) {
        ctx.fail("expected " + std::to_string(ctx.t.header.size()) + " fields, got " +
                 std::to_string(row.size()));
        return false;
    }
    return true;
}

bool cell_double(Ctx &ctx, const std::string &cell, const char *what, double &out) {
    try {
        out = parse_double(cell);
    } catch (const Error &) {
        ctx.fail(std::string(what) + ": not a number '" + cell + "'");
        return false;
    }
    if (!std::isfinite(out)) {
        ctx.fail(std::string(what) + ": not finite '" + cell + "'");
        return false;
    }
    return true;
}

bool cell_int(Ctx &ctx, const std::string &cell, const char *what, long long &out) {
    try {
        out = parse_int(cell);
    } catch (const Error &) {
        ctx.fail(std::string(what) + ": not an integer '" + cell + "'");
        return false;
    }
    return true;
}

bool cell_point(Ctx &ctx, const std::string &lat, const std::string &lon,
                geo::GeoPoint &out) {
    if (!cell_double(ctx, lat, "lat", out.lat) || !cell_double(ctx, lon, "lon", out.lon)) {
        return false;
    }
    if (out.lat < -90.0 || out.lat > 90.0 || out.lon < -180.0 || out.lon > 180.0) {
        ctx.fail("coordinate out of range (" + lat + ", " + lon + ")");
        return false;
    }
    return true;
}

bool cell_id(Ctx &ctx, const std::string &cell, const char *what, std::string &out) {
    if (cell.empty()) {
        ctx.fail(std::string(what) + " is empty");
        return false;
    }
    out = cell;
    return true;
}

std::vector<HouseholdRow> parse_households(const csv::Table &t,
                                           const std::vector<AssetSpec> &assets,
                                           std::vector<SchemaError> &errs) {
    Ctx ctx{t, errs};
    std::vector<std::string> want = {"household_id", "cluster_id"};
    for (const auto &a : assets) want.push_back(a.name);
    if (!check_header(ctx, want)) return {};

    std::vector<HouseholdRow> out;
    out.reserve(t.rows.size());
    std::unordered_set<std::string> ids;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ctx.row = r + 1;
        const auto &row = t.rows[r];
        if (!row_width_ok(ctx, row)) continue;
        HouseholdRow h;
        if (!cell_id(ctx, row[0], "household_id", h.household_id) ||
            !cell_id(ctx, row[1], "cluster_id", h.cluster_id)) {
            continue;
        }
        if (!ids.insert(h.household_id).second) {
            ctx.fail("duplicate household_id '" + h.household_id + "'");
            continue;
        }
        h.assets.resize(assets.size());
        bool ok = true;
        for (std::size_t a = 0; a < assets.size(); ++a) {
            double v;
            if (!cell_double(ctx, row[2 + a], assets[a].name.c_str(), v)) {
                ok = false;
                break;
            }
            if (assets[a].levels >= 2 &&
                (v != std::floor(v) || v < 0 || v > assets[a].levels - 1)) {
                ctx.fail("asset '" + assets[a].name + "' value " + row[2 + a] +
                         " outside domain 0.." + std::to_string(assets[a].levels - 1));
                ok = false;
                break;
            }
            h.assets[a] = v;
        }
        if (ok) out.push_back(std::move(h));
    }
    return out;
}

std::vector<ClusterRow> parse_clusters(const csv::Table &t,
                                       std::vector<SchemaError> &errs) {
    Ctx ctx{t, errs};
    if (!check_header(ctx, {"cluster_id", "lat", "lon", "year", "settlement"})) return {};
    std::vector<ClusterRow> out;
    out.reserve(t.rows.size());
    std::unordered_set<std::string> ids;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ctx.row = r + 1;
        const auto &row = t.rows[r];
        if (!row_width_ok(ctx, row)) continue;
        ClusterRow c;
        if (!cell_id(ctx, row[0], "cluster_id", c.cluster_id)) continue;
        if (!ids.insert(c.cluster_id).second) {
            ctx.fail("duplicate cluster_id '" + c.cluster_id + "'");
            continue;
        }
        if (!cell_point(ctx, row[1], row[2], c.pt)) continue;
        long long y;
        if (!cell_int(ctx, row[3], "year", y)) continue;
        if (y < 1900 || y > 2100) {
            ctx.fail("year " + row[3] + " out of range 1900..2100");
            continue;
        }
        c.year = static_cast<int>(y);
        try {
            c.settlement = settlement_from_string(row[4]);
        } catch (const Error &) {
            ctx.fail("settlement must be urban or rural, got '" + row[4] + "'");
            continue;
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<PlaceRow> parse_places(const csv::Table &t, std::vector<SchemaError> &errs) {
    Ctx ctx{t, errs};
    if (!check_header(ctx, {"place_id", "lat", "lon", "kind"})) return {};
    std::vector<PlaceRow> out;
    out.reserve(t.rows.size());
    std::unordered_set<std::string> ids;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ctx.row = r + 1;
        const auto &row = t.rows[r];
        if (!row_width_ok(ctx, row)) continue;
        PlaceRow p;
        if (!cell_id(ctx, row[0], "place_id", p.place_id)) continue;
        if (!ids.insert(p.place_id).second) {
            ctx.fail("duplicate place_id '" + p.place_id + "'");
            continue;
        }
        if (!cell_point(ctx, row[1], row[2], p.pt)) continue;
        try {
            p.kind = place_kind_from_string(row[3]);
        } catch (const Error &) {
            ctx.fail("unknown place kind '" + row[3] + "'");
            continue;
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<PopulationTile> parse_population(const csv::Table &t,
                                             std::vector<SchemaError> &errs) {
    Ctx ctx{t, errs};
    if (!check_header(ctx, {"lat", "lon", "population"})) return {};
    std::vector<PopulationTile> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ctx.row = r + 1;
        const auto &row = t.rows[r];
        if (!row_width_ok(ctx, row)) continue;
        PopulationTile p;
        if (!cell_point(ctx, row[0], row[1], p.pt)) continue;
        if (!cell_double(ctx, row[2], "population", p.population)) continue;
        if (p.population < 0) {
            ctx.fail("population must be >= 0, got " + row[2]);
            continue;
        }
        out.push_back(p);
    }
    return out;
}

std::vector<MobilityTile> parse_mobility_tiles(const csv::Table &t,
                                               std::vector<SchemaError> &errs) {
    Ctx ctx{t, errs};
    if (!check_header(ctx, {"tile_id", "lat", "lon"})) return {};
    std::vector<MobilityTile> out;
    out.reserve(t.rows.size());
    std::unordered_set<std::string> ids;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ctx.row = r + 1;
        const auto &row = t.rows[r];
        if (!row_width_ok(ctx, row)) continue;
        MobilityTile m;
        if (!cell_id(ctx, row[0], "tile_id", m.tile_id)) continue;
        if (!ids.insert(m.tile_id).second) {
            ctx.fail("duplicate tile_id '" + m.tile_id + "'");
            continue;
        }
        if (!cell_point(ctx, row[1], row[2], m.pt)) continue;
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<MovementEdge> parse_movement_edges(const csv::Table &t,
                                               std::vector<SchemaError> &errs) {
    Ctx ctx{t, errs};
    if (!check_header(ctx, {"tile_from", "tile_to", "count"})) return {};
    std::vector<MovementEdge> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ctx.row = r + 1;
        const auto &row = t.rows[r];
        if (!row_width_ok(ctx, row)) continue;
        MovementEdge e;
        if (!cell_id(ctx, row[0], "tile_from", e.tile_from) ||
            !cell_id(ctx, row[1], "tile_to", e.tile_to) ||
            !cell_double(ctx, row[2], "count", e.count)) {
            continue;
        }
        if (!(e.count > 0)) {
            ctx.fail("count must be > 0, got " + row[2]);
            continue;
        }
        out.push_back(std::move(e));
    }
    return out;
}

DemographicsTable parse_demographics(const csv::Table &t,
                                     const std::vector<std::string> &columns,
                                     std::vector<SchemaError> &errs) {
    Ctx ctx{t, errs};
    std::vector<std::string> want = {"location_id"};
    want.insert(want.end(), columns.begin(), columns.end());
    DemographicsTable out;
    out.columns = columns;
    if (!check_header(ctx, want)) return out;
    std::unordered_set<std::string> ids;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ctx.row = r + 1;
        const auto &row = t.rows[r];
        if (!row_width_ok(ctx, row)) continue;
        DemographicsTable::Row d;
        if (!cell_id(ctx, row[0], "location_id", d.location_id)) continue;
        if (!ids.insert(d.location_id).second) {
            ctx.fail("duplicate location_id '" + d.location_id + "'");
            continue;
        }
        d.values.resize(columns.size());
        bool ok = true;
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (row[1 + c].empty()) {
                d.values[c] = std::nan(""); // explicit missing cell
                continue;
            }
            if (!cell_double(ctx, row[1 + c], columns[c].c_str(), d.values[c])) {
                ok = false;
                break;
            }
        }
        if (ok) out.rows.push_back(std::move(d));
    }
    return out;
}

std::vector<PoiPoint> parse_poi(const csv::Table &t,
                                const std::vector<std::string> &categories,
                                std::vector<SchemaError> &errs) {
    Ctx ctx{t, errs};
    if (!check_header(ctx, {"lat", "lon", "category"})) return {};
    std::unordered_set<std::string> known(categories.begin(), categories.end());
    std::vector<PoiPoint> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ctx.row = r + 1;
        const auto &row = t.rows[r];
        if (!row_width_ok(ctx, row)) continue;
        PoiPoint p;
        if (!cell_point(ctx, row[0], row[1], p.pt)) continue;
        if (!known.count(row[2])) {
            ctx.fail("category '" + row[2] + "' not in manifest poi_categories");
            continue;
        }
        p.category = row[2];
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<RoadSegment> parse_roads(const csv::Table &t,
                                     std::vector<SchemaError> &errs) {
    Ctx ctx{t, errs};
    if (!check_header(ctx, {"lat1", "lon1", "lat2", "lon2"})) return {};
    std::vector<RoadSegment> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ctx.row = r + 1;
        const auto &row = t.rows[r];
        if (!row_width_ok(ctx, row)) continue;
        RoadSegment s;
        if (!cell_point(ctx, row[0], row[1], s.a)) continue;
        if (!cell_point(ctx, row[2], row[3], s.b)) continue;
        out.push_back(s);
    }
    return out;
}

std::vector<BuildingPoint> parse_buildings(const csv::Table &t,
                                           std::vector<SchemaError> &errs) {
    Ctx ctx{t, errs};
    if (!check_header(ctx, {"lat", "lon"})) return {};
    std::vector<BuildingPoint> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ctx.row = r + 1;
        const auto &row = t.rows[r];
        if (!row_width_ok(ctx, row)) continue;
        BuildingPoint b;
        if (!cell_point(ctx, row[0], row[1], b.pt)) continue;
        out.push_back(b);
    }
    return out;
}

std::vector<CellRow> parse_cells(const csv::Table &t, std::vector<SchemaError> &errs) {
    Ctx ctx{t, errs};
    if (!check_header(ctx, {"lat", "lon", "tower_id"})) return {};
    std::vector<CellRow> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ctx.row = r + 1;
        const auto &row = t.rows[r];
        if (!row_width_ok(ctx, row)) continue;
        CellRow c;
        if (!cell_point(ctx, row[0], row[1], c.pt)) continue;
        if (!cell_id(ctx, row[2], "tower_id", c.tower_id)) continue;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<NightlightPixel> parse_nightlight(const csv::Table &t,
                                              std::vector<SchemaError> &errs) {
    Ctx ctx{t, errs};
    if (!check_header(ctx, {"lat", "lon", "radiance", "year"})) return {};
    std::vector<NightlightPixel> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ctx.row = r + 1;
        const auto &row = t.rows[r];
        if (!row_width_ok(ctx, row)) continue;
        NightlightPixel p;
        if (!cell_point(ctx, row[0], row[1], p.pt)) continue;
        if (!cell_double(ctx, row[2], "radiance", p.radiance)) continue;
        if (p.radiance < 0) {
            ctx.fail("radiance must be >= 0, got " + row[2]);
            continue;
        }
        long long y;
        if (!cell_int(ctx, row[3], "year", y)) continue;
        if (y < 1900 || y > 2100) {
            ctx.fail("year " + row[3] + " out of range 1900..2100");
            continue;
        }
        p.year = static_cast<int>(y);
        out.push_back(p);
    }
    return out;
}

EmbeddingsTable parse_embeddings(const csv::Table &t, std::vector<SchemaError> &errs) {
    Ctx ctx{t, errs};
    std::vector<std::string> want = {"location_id"};
    for (std::size_t i = 0; i < EmbeddingsTable::kDim; ++i) {
        want.push_back("e" + zero_pad(i, 3));
    }
    EmbeddingsTable out;
    if (!check_header(ctx, want)) return out;
    std::unordered_set<std::string> ids;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ctx.row = r + 1;
        const auto &row = t.rows[r];
        if (!row_width_ok(ctx, row)) continue;
        EmbeddingsTable::Row e;
        if (!cell_id(ctx, row[0], "location_id", e.location_id)) continue;
        if (!ids.insert(e.location_id).second) {
            ctx.fail("duplicate location_id '" + e.location_id + "'");
            continue;
        }
        e.values.resize(EmbeddingsTable::kDim);
        bool ok = true;
        for (std::size_t c = 0; c < EmbeddingsTable::kDim; ++c) {
            if (!cell_double(ctx, row[1 + c], want[1 + c].c_str(), e.values[c])) {
                ok = false;
                break;
            }
        }
        if (ok) out.rows.push_back(std::move(e));
    }
    return out;
}

csv::Table read_layer_file(const std::filesystem::path &root, const std::string &rel) {
    return csv::read_csv(root / rel);
}

} // namespace

DatasetBundle load_bundle(const std::filesystem::path &root,
                          const std::string &manifest_name) {
    const Manifest m = read_manifest(root / manifest_name);
    for (const char *required : {"households", "clusters", "places"}) {
        if (!m.layer_files.count(required)) {
            throw Error("MissingRequiredLayer",
                        std::string(required) + " not listed in manifest");
        }
    }

    DatasetBundle b;
    b.country_code = m.country_code;
    b.assets = m.assets;
    b.poi_categories = m.poi_categories;
    b.demographic_columns = m.demographic_columns;

    std::vector<SchemaError> errs;
    auto file_of = [&](const char *layer) { return m.layer_files.at(layer)[0]; };

    b.households = parse_households(read_layer_file(root, file_of("households")),
                                    m.assets, errs);
    b.clusters = parse_clusters(read_layer_file(root, file_of("clusters")), errs);
    b.places = parse_places(read_layer_file(root, file_of("places")), errs);

    if (m.layer_files.count("population_tiles")) {
        b.population_tiles =
            parse_population(read_layer_file(root, file_of("population_tiles")), errs);
    }
    if (m.layer_files.count("mobility_tiles")) {
        b.mobility_tiles =
            parse_mobility_tiles(read_layer_file(root, file_of("mobility_tiles")), errs);
    }
    if (m.layer_files.count("movement_edges")) {
        b.movement_edges =
            parse_movement_edges(read_layer_file(root, file_of("movement_edges")), errs);
    }
    if (m.layer_files.count("demographics")) {
        b.demographics = parse_demographics(
            read_layer_file(root, file_of("demographics")), m.demographic_columns, errs);
    }
    if (m.layer_files.count("poi_points")) {
        b.poi_points = parse_poi(read_layer_file(root, file_of("poi_points")),
                                 m.poi_categories, errs);
    }
    if (m.layer_files.count("road_segments")) {
        b.road_segments =
            parse_roads(read_layer_file(root, file_of("road_segments")), errs);
    }
    if (m.layer_files.count("building_points")) {
        b.building_points =
            parse_buildings(read_layer_file(root, file_of("building_points")), errs);
    }
    if (m.layer_files.count("cells")) {
        b.cells = parse_cells(read_layer_file(root, file_of("cells")), errs);
    }
    if (m.layer_files.count("nightlight_pixels")) {
        std::vector<NightlightPixel> pixels;
        for (const auto &rel : m.layer_files.at("nightlight_pixels")) {
            auto part = parse_nightlight(read_layer_file(root, rel), errs);
            pixels.insert(pixels.end(), part.begin(), part.end());
        }
        b.nightlight_pixels = std::move(pixels);
    }
    if (m.layer_files.count("embeddings")) {
        b.embeddings = parse_embeddings(read_layer_file(root, file_of("embeddings")), errs);
    }

    if (!errs.empty()) {
        std::string msg = std::to_string(errs.size()) + " malformed row(s):";
        for (const auto &e : errs) {
            msg += "\n  " + e.to_string();
        }
        throw Error("SchemaError", msg);
    }

    for (const auto &c : b.clusters) b.years.insert(c.year);
    if (b.nightlight_pixels) {
        for (const auto &p : *b.nightlight_pixels) b.years.insert(p.year);
    }

    validate_bundle(b);
    return b;
}

namespace {

std::string fmt(double v) { return format_double(v); }

csv::Table households_table(const DatasetBundle &b) {
    csv::Table t;
    t.header = {"household_id", "cluster_id"};
    for (const auto &a : b.assets) t.header.push_back(a.name);
    for (const auto &h : b.households) {
        std::vector<std::string> row = {h.household_id, h.cluster_id};
        for (double v : h.assets) row.push_back(fmt(v));
        t.rows.push_back(std::move(row));
    }
    return t;
}

csv::Table clusters_table(const DatasetBundle &b) {
    csv::Table t;
    t.header = {"cluster_id", "lat", "lon", "year", "settlement"};
    for (const auto &c : b.clusters) {
        t.rows.push_back({c.cluster_id, fmt(c.pt.lat), fmt(c.pt.lon),
                          std::to_string(c.year), std::string(to_string(c.settlement))});
    }
    return t;
}

csv::Table places_table(const DatasetBundle &b) {
    csv::Table t;
    t.header = {"place_id", "lat", "lon", "kind"};
    for (const auto &p : b.places) {
        t.rows.push_back(
            {p.place_id, fmt(p.pt.lat), fmt(p.pt.lon), std::string(to_string(p.kind))});
    }
    return t;
}

} // namespace

void write_bundle(const DatasetBundle &b, const std::filesystem::path &root,
                  const std::string &manifest_name) {
    std::filesystem::create_directories(root);

    Manifest m;
    m.country_code = b.country_code;
    m.assets = b.assets;
    m.demographic_columns = b.demographic_columns;
    m.poi_categories = b.poi_categories;

    m.layer_files["households"] = {"households.csv"};
    csv::write_csv(root / "households.csv", households_table(b));
    m.layer_files["clusters"] = {"clusters.csv"};
    csv::write_csv(root / "clusters.csv", clusters_table(b));
    m.layer_files["places"] = {"places.csv"};
    csv::write_csv(root / "places.csv", places_table(b));

    if (b.population_tiles) {
        csv::Table t;
        t.header = {"lat", "lon", "population"};
        for (const auto &p : *b.population_tiles) {
            t.rows.push_back({fmt(p.pt.lat), fmt(p.pt.lon), fmt(p.population)});
        }
        m.layer_files["population_tiles"] = {"population_tiles.csv"};
        csv::write_csv(root / "population_tiles.csv", t);
    }
    if (b.mobility_tiles) {
        csv::Table t;
        t.header = {"tile_id", "lat", "lon"};
        for (const auto &x : *b.mobility_tiles) {
            t.rows.push_back({x.tile_id, fmt(x.pt.lat), fmt(x.pt.lon)});
        }
        m.layer_files["mobility_tiles"] = {"mobility_tiles.csv"};
        csv::write_csv(root / "mobility_tiles.csv", t);
    }
    if (b.movement_edges) {
        csv::Table t;
        t.header = {"tile_from", "tile_to", "count"};
        for (const auto &e : *b.movement_edges) {
            t.rows.push_back({e.tile_from, e.tile_to, fmt(e.count)});
        }
        m.layer_files["movement_edges"] = {"movement_edges.csv"};
        csv::write_csv(root / "movement_edges.csv", t);
    }
    if (b.demographics) {
        csv::Table t;
        t.header = {"location_id"};
        t.header.insert(t.header.end(), b.demographics->columns.begin(),
                        b.demographics->columns.end());
        for (const auto &r : b.demographics->rows) {
            std::vector<std::string> row = {r.location_id};
            for (double v : r.values) {
                row.push_back(std::isnan(v) ? std::string() : fmt(v));
            }
            t.rows.push_back(std::move(row));
        }
        m.layer_files["demographics"] = {"demographics.csv"};
        csv::write_csv(root / "demographics.csv", t);
    }
    if (b.poi_points) {
        csv::Table t;
        t.header = {"lat", "lon", "category"};
        for (const auto &p : *b.poi_points) {
            t.rows.push_back({fmt(p.pt.lat), fmt(p.pt.lon), p.category});
        }
        m.layer_files["poi_points"] = {"poi_points.csv"};
        csv::write_csv(root / "poi_points.csv", t);
    }
    if (b.road_segments) {
        csv::Table t;
        t.header = {"lat1", "lon1", "lat2", "lon2"};
        for (const auto &s : *b.road_segments) {
            t.rows.push_back({fmt(s.a.lat), fmt(s.a.lon), fmt(s.b.lat), fmt(s.b.lon)});
        }
        m.layer_files["road_segments"] = {"road_segments.csv"};
        csv::write_csv(root / "road_segments.csv", t);
    }
    if (b.building_points) {
        csv::Table t;
        t.header = {"lat", "lon"};
        for (const auto &p : *b.building_points) {
            t.rows.push_back({fmt(p.pt.lat), fmt(p.pt.lon)});
        }
        m.layer_files["building_points"] = {"building_points.csv"};
        csv::write_csv(root / "building_points.csv", t);
    }
    if (b.cells) {
        csv::Table t;
        t.header = {"lat", "lon", "tower_id"};
        for (const auto &c : *b.cells) {
            t.rows.push_back({fmt(c.pt.lat), fmt(c.pt.lon), c.tower_id});
        }
        m.layer_files["cells"] = {"cells.csv"};
        csv::write_csv(root / "cells.csv", t);
    }
    if (b.nightlight_pixels) {
        std::map<int, csv::Table> by_year;
        for (const auto &p : *b.nightlight_pixels) {
            auto &t = by_year[p.year];
            if (t.header.empty()) t.header = {"lat", "lon", "radiance", "year"};
            t.rows.push_back(
                {fmt(p.pt.lat), fmt(p.pt.lon), fmt(p.radiance), std::to_string(p.year)});
        }
        std::vector<std::string> files;
        for (auto &[year, t] : by_year) {
            std::string name = "nightlight_" + std::to_string(year) + ".csv";
            csv::write_csv(root / name, t);
            files.push_back(name);
        }
        if (files.empty()) {
            // an empty layer still needs a file so absence stays distinct
            csv::Table t;
            t.header = {"lat", "lon", "radiance", "year"};
            csv::write_csv(root / "nightlight_all.csv", t);
            files.push_back("nightlight_all.csv");
        }
        m.layer_files["nightlight_pixels"] = files;
    }
    if (b.embeddings) {
        csv::Table t;
        t.header = {"location_id"};
        for (std::size_t i = 0; i < EmbeddingsTable::kDim; ++i) {
            t.header.push_back("e" + zero_pad(i, 3));
        }
        for (const auto &r : b.embeddings->rows) {
            std::vector<std::string> row = {r.location_id};
            for (double v : r.values) row.push_back(fmt(v));
            t.rows.push_back(std::move(row));
        }
        m.layer_files["embeddings"] = {"embeddings.csv"};
        csv::write_csv(root / "embeddings.csv", t);
    }

    write_manifest(m, root / manifest_name);
}

std::string ValidationReport::to_string() const {
    std::string out = "layers:\n";
    for (const auto &[name, count] : layer_counts) {
        out += "  " + name + ": " + std::to_string(count) + "\n";
    }
    out += "clusters per year:\n";
    for (const auto &[year, count] : clusters_per_year) {
        out += "  " + std::to_string(year) + ": " + std::to_string(count) + "\n";
    }
    const std::size_t total = urban_clusters + rural_clusters;
    out += "settlement: urban " + std::to_string(urban_clusters) + ", rural " +
           std::to_string(rural_clusters);
    if (total > 0) {
        const double share = 100.0 * static_cast<double>(rural_clusters) /
                             static_cast<double>(total);
        out += " (" + format_double(share) + "% rural)";
    }
    out += "\n";
    for (const auto &w : warnings) {
        out += "warning: " + w + "\n";
    }
    return out;
}

ValidationReport validate_bundle(const DatasetBundle &b) {
    ValidationReport rep;
    rep.layer_counts["households"] = b.households.size();
    rep.layer_counts["clusters"] = b.clusters.size();
    rep.layer_counts["places"] = b.places.size();
    if (b.population_tiles) rep.layer_counts["population_tiles"] = b.population_tiles->size();
    if (b.mobility_tiles) rep.layer_counts["mobility_tiles"] = b.mobility_tiles->size();
    if (b.movement_edges) rep.layer_counts["movement_edges"] = b.movement_edges->size();
    if (b.demographics) rep.layer_counts["demographics"] = b.demographics->rows.size();
    if (b.poi_points) rep.layer_counts["poi_points"] = b.poi_points->size();
    if (b.road_segments) rep.layer_counts["road_segments"] = b.road_segments->size();
    if (b.building_points) rep.layer_counts["building_points"] = b.building_points->size();
    if (b.cells) rep.layer_counts["cells"] = b.cells->size();
    if (b.nightlight_pixels) rep.layer_counts["nightlight_pixels"] = b.nightlight_pixels->size();
    if (b.embeddings) rep.layer_counts["embeddings"] = b.embeddings->rows.size();

    std::unordered_map<std::string, std::size_t> households_per_cluster;
    std::unordered_set<std::string> cluster_ids, location_ids;
    for (const auto &c : b.clusters) {
        cluster_ids.insert(c.cluster_id);
        location_ids.insert(c.cluster_id);
        rep.clusters_per_year[c.year] += 1;
        (c.settlement == Settlement::urban ? rep.urban_clusters : rep.rural_clusters) += 1;
    }
    for (const auto &p : b.places) location_ids.insert(p.place_id);

    std::vector<std::string> dangling;
    auto flag = [&](const std::string &what) {
        if (dangling.size() < 20) dangling.push_back(what);
    };

    for (const auto &h : b.households) {
        if (!cluster_ids.count(h.cluster_id)) {
            flag("household '" + h.household_id + "' references unknown cluster '" +
                 h.cluster_id + "'");
        } else {
            households_per_cluster[h.cluster_id] += 1;
        }
    }
    if (b.movement_edges && !b.movement_edges->empty()) {
        if (!b.mobility_tiles) {
            flag("movement_edges present without mobility_tiles");
        } else {
            std::unordered_set<std::string> tiles;
            for (const auto &t : *b.mobility_tiles) tiles.insert(t.tile_id);
            for (const auto &e : *b.movement_edges) {
                if (!tiles.count(e.tile_from)) {
                    flag("movement edge references unknown tile '" + e.tile_from + "'");
                }
                if (!tiles.count(e.tile_to)) {
                    flag("movement edge references unknown tile '" + e.tile_to + "'");
                }
            }
        }
    }
    if (b.demographics) {
        for (const auto &r : b.demographics->rows) {
            if (!location_ids.count(r.location_id)) {
                flag("demographics row references unknown location '" + r.location_id + "'");
            }
        }
    }
    if (b.embeddings) {
        for (const auto &r : b.embeddings->rows) {
            if (!location_ids.count(r.location_id)) {
                flag("embeddings row references unknown location '" + r.location_id + "'");
            }
        }
    }
    if (!dangling.empty()) {
        std::string msg;
        for (const auto &d : dangling) msg += "\n  " + d;
        throw Error("DanglingReference", msg);
    }

    std::size_t clusters_without_households = 0;
    for (const auto &c : b.clusters) {
        if (!households_per_cluster.count(c.cluster_id)) ++clusters_without_households;
    }
    if (clusters_without_households > 0) {
        rep.warnings.push_back(std::to_string(clusters_without_households) +
                               " cluster(s) have no household rows");
    }
    if (!b.movement_edges || b.movement_edges->empty()) {
        rep.warnings.push_back("no movement edges: mobility features will be "
                               "distance-only/missing");
    }
    if (!b.population_tiles) rep.warnings.push_back("population_tiles absent");
    if (!b.demographics) rep.warnings.push_back("demographics absent");
    if (!b.poi_points) rep.warnings.push_back("poi_points absent");
    if (!b.road_segments) rep.warnings.push_back("road_segments absent");
    if (!b.building_points) rep.warnings.push_back("building_points absent");
    if (!b.cells) rep.warnings.push_back("cells absent");
    if (!b.nightlight_pixels) rep.warnings.push_back("nightlight_pixels absent");

    return rep;
}

} // namespace povmap::ingest
