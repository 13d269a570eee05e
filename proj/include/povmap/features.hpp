#pragma once

#include "povmap/geo.hpp"
#include "povmap/ingest.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace povmap::features {

/// Knobs shared by every extractor. Defaults follow the metadata feature
/// table: four buffer radii, gravitational betas, a 10 nW radiance threshold
/// for the lit-fraction statistics.
struct FeatureConfig {
    std::vector<double> radii_km = {1.6, 2.0, 5.0, 10.0};
    std::vector<double> beta_pop = {1.0, 1.5, 2.0};
    std::vector<double> beta_mob = {1.0, 1.5, 2.0}; // the raw (beta=none) variant is implicit
    double nightlight_rad_min = 10.0;
    double pagerank_damping = 0.85;
    double pagerank_tol = 1e-10;

    /// Throws Error("BadConfig") unless radii are positive ascending, betas
    /// positive, and damping in (0, 1).
    void validate() const;
};

/// Movement network: tiles as nodes, directed weighted edges with parallel
/// records summed. Self-loops are allowed.
struct MobilityGraph {
    struct Node {
        std::string tile_id;
        geo::GeoPoint pt;
    };
    struct Edge {
        std::size_t from = 0;
        std::size_t to = 0;
        double weight = 0.0;
    };
    std::vector<Node> nodes;
    std::vector<Edge> edges; // unique (from, to) pairs, in first-seen order
};

/// Sums parallel records into single edges. Throws Error("UnknownTile") when
/// an edge references a tile that is not in the node list.
MobilityGraph build_mobility_graph(const std::vector<ingest::MovementEdge> &edges,
                                   const std::vector<ingest::MobilityTile> &tiles);

/// Power-iteration pagerank. Dangling mass is redistributed uniformly; the
/// unweighted variant treats every edge weight as 1. Scores sum to 1.
std::vector<double> pagerank(const MobilityGraph &g, bool weighted,
                             double damping = 0.85, double tol = 1e-10);

/// A location to featurize: a survey cluster (possibly relocated) or a
/// populated place.
struct Location {
    std::string id;
    geo::GeoPoint pt;
    int year = 0;    // survey year for clusters, newest bundle year for places
    bool urban = false;
};

std::vector<Location> cluster_locations(const std::vector<ingest::ClusterRow> &clusters);
std::vector<Location> place_locations(const ingest::DatasetBundle &b);

/// Feature table. Missing values are NaN in memory and "" in the CSV export;
/// zero always means an observed zero.
struct FeatureMatrix {
    std::vector<std::string> location_ids;
    std::vector<int> years;                  // per row
    std::vector<std::string> columns;        // canonical order
    std::vector<std::string> sources;        // per column: population, mobility,
                                             // demographics, infrastructure,
                                             // connectivity, nightlight,
                                             // settlement, embedding
    std::vector<std::vector<double>> values; // rows x columns

    std::size_t col(const std::string &name) const; // Error("MissingColumn")
    std::size_t n_rows() const { return location_ids.size(); }
    std::size_t n_cols() const { return columns.size(); }
};

// Per-layer lookup structures, built once per bundle and shared across
// locations. Absent layers leave the optional empty.

struct PopulationIndex {
    geo::SpatialIndex index;
    std::vector<double> population; // by index slot

    static PopulationIndex build(const std::vector<ingest::PopulationTile> &tiles);
};

struct MobilityContext {
    MobilityGraph graph;
    geo::SpatialIndex node_index; // ids are tile ids, slots match graph nodes
    std::vector<double> strength_in, strength_out;   // weighted flows
    std::vector<std::size_t> degree_in, degree_out;  // edge counts
    std::vector<double> pagerank_scores, weighted_pagerank_scores;
    std::vector<double> avg_in_km, avg_out_km; // NaN when the node has no such edges

    static MobilityContext build(const MobilityGraph &g, const FeatureConfig &cfg);
};

struct PoiIndex {
    std::vector<std::string> categories;            // manifest order
    std::vector<geo::SpatialIndex> per_category;    // parallel to categories

    static PoiIndex build(const std::vector<ingest::PoiPoint> &pois,
                          const std::vector<std::string> &categories);
};

struct CellIndex {
    geo::SpatialIndex index;
    std::vector<std::string> tower_id; // by slot

    static CellIndex build(const std::vector<ingest::CellRow> &cells);
};

struct NightlightIndex {
    std::map<int, geo::SpatialIndex> by_year;
    std::map<int, std::vector<double>> radiance; // by slot within each year

    static NightlightIndex build(const std::vector<ingest::NightlightPixel> &pixels);
};

// The extractors. Every function returns its fixed number of values with NaN
// for missing; they never throw on empty layers.

/// 9 values: closest tile distance (km) and population, totals within each
/// radius, and closest-tile population / distance^beta (distance in meters,
/// floored at 1 m).
std::array<double, 9> population_features(const geo::GeoPoint &loc,
                                          const PopulationIndex &tiles,
                                          const FeatureConfig &cfg);

/// 27 values: closest tile distance, mean incoming/outgoing edge lengths of
/// the closest tile (self-loops excluded), then for each metric in
/// {people_flow_in, people_flow_out, in_degree, out_degree, pagerank,
/// weighted_pagerank} the raw value plus value/distance^beta for the three
/// betas.
std::array<double, 27> mobility_features(const geo::GeoPoint &loc,
                                         const MobilityContext &ctx,
                                         const FeatureConfig &cfg);

/// 37 values: pass-through of the manifest demographics columns for this
/// location id, all-NaN when the row is absent.
/// Throws Error("ColumnCountMismatch") when the table is not 37 columns wide.
std::vector<double> demographics_features(const std::string &location_id,
                                          const ingest::DemographicsTable &table);

/// 54 values: per POI category a count within the 1.6 km box and the
/// distance to the closest instance anywhere; building count and closest
/// distance; road closest distance, box segment count, clipped box length,
/// and box intersection count.
std::vector<double> infrastructure_features(const geo::GeoPoint &loc,
                                            const PoiIndex &pois,
                                            const std::vector<ingest::RoadSegment> &roads,
                                            const geo::SpatialIndex &buildings,
                                            const FeatureConfig &cfg);

/// 9 values: closest cell distance, cell counts within each radius, distinct
/// tower counts within each radius.
std::array<double, 9> connectivity_features(const geo::GeoPoint &loc,
                                            const CellIndex &cells,
                                            const FeatureConfig &cfg);

/// 36 values: per radius {min, max, mean, median, frac_pixels, frac_area,
/// frac_sum_rad, t30_mean, l30_mean} over the pixels of the location's year.
std::array<double, 36> nightlight_features(const geo::GeoPoint &loc, int year,
                                           const NightlightIndex &pixels,
                                           const FeatureConfig &cfg);

/// Builds the full matrix for the given locations: 173 metadata columns in
/// canonical source order (population, mobility, demographics,
/// infrastructure, connectivity, nightlight, settlement flag) plus 784
/// embedding columns when the bundle has embeddings. Values are raw; apply
/// standardize_per_year before modeling.
FeatureMatrix assemble(const std::vector<Location> &locations,
                       const ingest::DatasetBundle &bundle,
                       const FeatureConfig &cfg);

/// Fitted per-(nightlight column, year) mean and population std, so the same
/// transform can be replayed on another matrix: fit on the training clusters,
/// apply to the places being mapped.
struct Standardization {
    std::map<std::string, std::map<int, std::array<double, 2>>> stats;
};

/// Z-scores every nightlight column per year across the matrix rows of that
/// year (population std; zero-variance columns become 0, NaN stays NaN).
/// Other columns are untouched. Returns the fitted parameters.
Standardization standardize_per_year(FeatureMatrix &m);

/// Replays previously fitted parameters. Rows whose (column, year) pair was
/// never fitted keep their raw values; each such year is reported once in
/// warnings when given.
void apply_standardization(FeatureMatrix &m, const Standardization &p,
                           std::vector<std::string> *warnings = nullptr);

/// CSV (location_id, year, features; "" = missing) plus a JSON sidecar
/// describing each column's name, source, and year-standardization flag.
void write_feature_csv(const FeatureMatrix &m, const std::filesystem::path &csv_file,
                       const std::filesystem::path &sidecar_file);

FeatureMatrix read_feature_csv(const std::filesystem::path &csv_file,
                               const std::filesystem::path &sidecar_file);

} // namespace povmap::features
