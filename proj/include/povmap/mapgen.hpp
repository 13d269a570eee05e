#pragma once

#include "povmap/csv.hpp"
#include "povmap/features.hpp"
#include "povmap/gbrt.hpp"
#include "povmap/geo.hpp"
#include "povmap/ingest.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace povmap::mapgen {

/// One populated place with its predicted wealth distribution. Population is
/// the resident count within 1.6 km, NaN when the bundle has no population
/// layer.
struct MapEntry {
    std::string place_id;
    geo::GeoPoint pt;
    ingest::Settlement settlement = ingest::Settlement::rural;
    double mu = 0.0;    // clipped to [0, 100] by the predictor
    double sigma = 0.0; // >= 0
    double population = 0.0;

    bool operator==(const MapEntry &) const = default;
};

struct PovertyMap {
    std::vector<MapEntry> entries; // bundle place order
    std::string model_fingerprint;
    std::string timestamp; // wall-clock metadata only; empty from infer_places

    bool operator==(const PovertyMap &) const = default;
};

/// Stable 16-hex-digit digest of the serialized model, for tying a map to
/// the exact model that produced it.
std::string model_fingerprint(const gbrt::GBRTEnsemble &model);

/// Predicts (mu, sigma) for every place in the bundle. Place features use
/// the newest bundle year; nightlight standardization is fitted on the
/// bundle's survey clusters and replayed on the places, matching what the
/// model saw in training (places themselves when there are no clusters).
/// Places with missing features are still predicted through the trees'
/// missing-value routing. Throws Error("DuplicatePlace") on a repeated
/// place id; prediction errors propagate.
PovertyMap infer_places(const gbrt::GBRTEnsemble &model, const ingest::DatasetBundle &bundle,
                        const features::FeatureConfig &cfg = {});

/// FeatureCollection of Point features, coordinates ordered (lon, lat),
/// properties {mu, sigma, settlement, population}; the place id is the
/// feature id and the fingerprint/timestamp ride in a metadata member.
nlohmann::json export_geojson(const PovertyMap &map);

/// Inverse of export_geojson. Throws Error("BadGeoJson") on anything that
/// does not match the exported shape; null population becomes NaN.
PovertyMap import_geojson(const nlohmann::json &doc);

void write_geojson(const std::filesystem::path &file, const PovertyMap &map);
PovertyMap read_geojson(const std::filesystem::path &file);

/// Flat mirror of the map: place_id, lat, lon, settlement, mu, sigma,
/// population ("" when NaN).
csv::Table map_table(const PovertyMap &map);

/// Scatter of predicted sigma against predicted mu, colored by settlement,
/// with a degree-2 fit curve per group that has one. Axes cover the data
/// extent plus a 5% margin. Self-contained SVG; deterministic for a fixed
/// input. Throws Error("EmptyMap") when there is nothing to plot and
/// Error("LengthMismatch") on ragged inputs.
std::string render_scatter(const std::vector<double> &mu, const std::vector<double> &sigma,
                           const std::vector<bool> &urban);
std::string render_scatter(const PovertyMap &map);

} // namespace povmap::mapgen
