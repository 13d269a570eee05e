#pragma once

#include "povmap/geo.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace povmap::ingest {

/// The schema fixes these widths; manifests that disagree are rejected.
inline constexpr std::size_t kAssetCount = 10;
inline constexpr std::size_t kDemographicColumns = 37;
inline constexpr std::size_t kPoiCategories = 24;

enum class Settlement { urban, rural };

std::string_view to_string(Settlement s);
Settlement settlement_from_string(std::string_view s);

enum class PlaceKind { city, town, neighborhood, village, hamlet, isolated_dwelling };

std::string_view to_string(PlaceKind k);
PlaceKind place_kind_from_string(std::string_view s);

/// Cities, towns and neighborhoods count as urban; villages, hamlets and
/// isolated dwellings as rural.
bool is_urban(PlaceKind k);
inline Settlement settlement_of(PlaceKind k) {
    return is_urban(k) ? Settlement::urban : Settlement::rural;
}

/// One wealth-survey asset column. levels >= 2 declares an ordinal (or
/// binary) domain with valid integer answers 0..levels-1; levels = 0 leaves
/// the column as unconstrained continuous numeric.
struct AssetSpec {
    std::string name;
    int levels = 0;

    bool operator==(const AssetSpec &) const = default;
};

struct HouseholdRow {
    std::string household_id;
    std::string cluster_id;
    std::vector<double> assets; // one per manifest asset column

    bool operator==(const HouseholdRow &) const = default;
};

struct ClusterRow {
    std::string cluster_id;
    geo::GeoPoint pt;
    int year = 0;
    Settlement settlement = Settlement::rural;

    bool operator==(const ClusterRow &) const = default;
};

struct PlaceRow {
    std::string place_id;
    geo::GeoPoint pt;
    PlaceKind kind = PlaceKind::village;

    bool operator==(const PlaceRow &) const = default;
};

struct PopulationTile {
    geo::GeoPoint pt;
    double population = 0.0;

    bool operator==(const PopulationTile &) const = default;
};

/// Node of the movement network. The edge table references these by id.
struct MobilityTile {
    std::string tile_id;
    geo::GeoPoint pt;

    bool operator==(const MobilityTile &) const = default;
};

struct MovementEdge {
    std::string tile_from;
    std::string tile_to;
    double count = 0.0; // pre-aggregated baseline movement count, > 0

    bool operator==(const MovementEdge &) const = default;
};

/// Audience-estimate style table keyed by location id. Cells may be missing
/// (NaN); the column list comes from the manifest and is fixed at 37.
struct DemographicsTable {
    struct Row {
        std::string location_id;
        std::vector<double> values; // NaN marks a missing cell
    };
    std::vector<std::string> columns;
    std::vector<Row> rows;
};

struct PoiPoint {
    geo::GeoPoint pt;
    std::string category;

    bool operator==(const PoiPoint &) const = default;
};

struct RoadSegment {
    geo::GeoPoint a;
    geo::GeoPoint b;

    bool operator==(const RoadSegment &) const = default;
};

struct BuildingPoint {
    geo::GeoPoint pt;

    bool operator==(const BuildingPoint &) const = default;
};

struct CellRow {
    geo::GeoPoint pt;
    std::string tower_id;

    bool operator==(const CellRow &) const = default;
};

struct NightlightPixel {
    geo::GeoPoint pt;
    double radiance = 0.0;
    int year = 0;

    bool operator==(const NightlightPixel &) const = default;
};

/// Precomputed image-embedding vectors, 784 dims per location.
struct EmbeddingsTable {
    struct Row {
        std::string location_id;
        std::vector<double> values;
    };
    std::vector<Row> rows;

    static constexpr std::size_t kDim = 784;
};

/// A malformed record, with enough context to find it again.
struct SchemaError {
    std::string file;
    std::size_t row = 0; // 1-based data row index, 0 for header problems
    std::string reason;

    std::string to_string() const;
};

/// Map from layer files to the typed bundle. Required layers: households,
/// clusters, places. The rest are optional and recorded as absent when the
/// manifest does not list them.
struct Manifest {
    std::string country_code;
    std::map<std::string, std::vector<std::string>> layer_files;
    std::vector<AssetSpec> assets;                 // exactly 10
    std::vector<std::string> demographic_columns;  // exactly 37
    std::vector<std::string> poi_categories;       // exactly 24
};

Manifest read_manifest(const std::filesystem::path &file);
void write_manifest(const Manifest &m, const std::filesystem::path &file);

/// Every snapshot layer, typed and validated. Optional layers are absent
/// (std::nullopt) when their file was not listed, never silently empty.
struct DatasetBundle {
    std::string country_code;
    std::vector<AssetSpec> assets;
    std::vector<std::string> poi_categories;

    std::vector<HouseholdRow> households;
    std::vector<ClusterRow> clusters;
    std::vector<PlaceRow> places;

    std::optional<std::vector<PopulationTile>> population_tiles;
    std::optional<std::vector<MobilityTile>> mobility_tiles;
    std::optional<std::vector<MovementEdge>> movement_edges;
    std::optional<DemographicsTable> demographics;
    std::optional<std::vector<PoiPoint>> poi_points;
    std::optional<std::vector<RoadSegment>> road_segments;
    std::optional<std::vector<BuildingPoint>> building_points;
    std::optional<std::vector<CellRow>> cells;
    std::optional<std::vector<NightlightPixel>> nightlight_pixels;
    std::optional<EmbeddingsTable> embeddings;

    /// Manifest's fixed demographic column list, kept even when the layer
    /// itself is absent so feature assembly can emit missing-marked columns.
    std::vector<std::string> demographic_columns;

    /// Survey years plus nightlight years, never empty after load.
    std::set<int> years;

    int newest_year() const { return *years.rbegin(); }
};

/// Reads manifest + layer files under root, validates per-row schema and
/// referential integrity, and returns the typed bundle.
/// Throws Error("MissingRequiredLayer"), Error("SchemaError") carrying every
/// malformed row, or Error("DanglingReference").
DatasetBundle load_bundle(const std::filesystem::path &root,
                          const std::string &manifest_name = "manifest.json");

/// Writes every present layer plus the manifest under root, such that
/// load_bundle(root) reproduces the bundle.
void write_bundle(const DatasetBundle &b, const std::filesystem::path &root,
                  const std::string &manifest_name = "manifest.json");

struct ValidationReport {
    std::map<std::string, std::size_t> layer_counts; // absent layers omitted
    std::map<int, std::size_t> clusters_per_year;
    std::size_t urban_clusters = 0;
    std::size_t rural_clusters = 0;
    std::vector<std::string> warnings;

    std::string to_string() const;
};

/// Pure referential and shape checks over an already-typed bundle.
/// Throws Error("DanglingReference") when a foreign key does not resolve.
ValidationReport validate_bundle(const DatasetBundle &b);

} // namespace povmap::ingest
