#pragma once

#include "povmap/ingest.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace povmap::groundtruth {

/// Household-by-asset numeric matrix, row-parallel id vectors kept for the
/// cluster join. Always exactly one column per manifest asset.
struct AssetMatrix {
    std::vector<std::string> household_ids;
    std::vector<std::string> cluster_ids;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows; // n x columns.size()
};

AssetMatrix build_asset_matrix(const std::vector<ingest::HouseholdRow> &households,
                               const std::vector<ingest::AssetSpec> &assets);

/// First-principal-component weights over column-standardized assets plus the
/// min-max rescale that maps raw scores onto [0, 100]. Serializable so a
/// fixed published table can be swapped in for the PCA fit.
struct WeightSpec {
    std::vector<std::string> columns;
    std::vector<double> loadings;  // unit norm over kept columns, 0 for dropped
    std::vector<double> col_mean;
    std::vector<double> col_std;   // population std, 0 marks a dropped column
    double score_min = 0.0;        // raw score of the poorest reference household
    double score_max = 1.0;        // raw score of the richest reference household
};

std::string weight_spec_to_json(const WeightSpec &w);
WeightSpec weight_spec_from_json(const std::string &text);

/// Fits the weights on a reference population: PCA on the correlation matrix
/// of the non-constant columns (power iteration), sign fixed so the loading
/// sum is positive, rescale anchored at the observed score min/max.
/// Throws Error("DegenerateMatrix") when every column is constant or fewer
/// than 2 households are given.
WeightSpec compute_asset_weights(const AssetMatrix &m);

/// Applies weights: standardize, project, min-max rescale to [0, 100], clip.
/// Throws Error("WeightDimensionMismatch") when columns disagree.
std::vector<double> compute_iwi(const AssetMatrix &m, const WeightSpec &w);

/// Per-cluster wealth target: mean and population standard deviation
/// (divisor n) of the household scores.
struct IWIStats {
    std::string cluster_id;
    double mu = 0.0;        // [0, 100]
    double sigma = 0.0;     // >= 0, 0 for singleton clusters
    std::size_t n_households = 0;
    ingest::Settlement settlement = ingest::Settlement::rural;
    int year = 0;
};

/// Aggregates household scores into per-cluster stats, output in cluster
/// table order. Throws Error("EmptyCluster") when a cluster has no
/// households; appends a note per singleton cluster to *warnings when given.
std::vector<IWIStats> aggregate_clusters(const std::vector<std::string> &cluster_ids,
                                         const std::vector<double> &scores,
                                         const std::vector<ingest::ClusterRow> &clusters,
                                         std::vector<std::string> *warnings = nullptr);

enum class RelocationMode { none, rc, ruc };

std::string_view to_string(RelocationMode m);
RelocationMode relocation_mode_from_string(std::string_view s);

/// Search radii for relocation candidates, sized to cover the survey's
/// coordinate displacement (2 km urban; rural displaced up to 5 km with a
/// 1% tail at 10 km).
inline constexpr double kUrbanRadiusKm = 2.0;
inline constexpr double kRuralRadiusKm = 10.0;

struct RelocationPlan {
    struct Assignment {
        std::string cluster_id;
        std::string place_id;   // empty means keep_noisy
        double distance_km = 0.0;

        bool keeps_noisy() const { return place_id.empty(); }
        bool operator==(const Assignment &) const = default;
    };
    std::vector<Assignment> assignments; // cluster table order
    RelocationMode mode = RelocationMode::none;

    bool operator==(const RelocationPlan &) const = default;
};

/// Greedy iterative matching of clusters to same-settlement places within
/// the displacement radius. Each round fixes the unassigned cluster with the
/// fewest remaining candidates (ties: smaller cluster_id) and gives it its
/// nearest remaining candidate (ties: smaller place_id), which then becomes
/// unavailable. Empty candidate sets keep the noisy location. Mode rc only
/// relocates rural clusters; mode none relocates nothing. Total, never throws.
RelocationPlan relocate(const std::vector<ingest::ClusterRow> &clusters,
                        const std::vector<ingest::PlaceRow> &places,
                        RelocationMode mode);

/// Clusters with assigned place coordinates substituted in.
std::vector<ingest::ClusterRow>
apply_relocation(const std::vector<ingest::ClusterRow> &clusters,
                 const std::vector<ingest::PlaceRow> &places,
                 const RelocationPlan &plan);

/// cluster_id, place_id|keep_noisy, distance_km ("" when kept).
void write_relocation_csv(const RelocationPlan &plan, const std::filesystem::path &file);

/// G = sum_ij |x_i - x_j| / (2 n^2 mean). Values must be nonnegative and not
/// all zero; throws Error("AllZero") / Error("NegativeValues").
double gini(const std::vector<double> &values);

/// Equal-width bins over [min, max]; the last bin includes the right edge.
/// All-equal input collapses to bin 0 for every value. k >= 2.
std::vector<int> discretize_equal_width(const std::vector<double> &values, int k = 10);

} // namespace povmap::groundtruth
