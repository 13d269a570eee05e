#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "povmap/evalreport.hpp"
#include "povmap/features.hpp"
#include "povmap/gbrt.hpp"
#include "povmap/groundtruth.hpp"
#include "povmap/ingest.hpp"
#include "povmap/rng.hpp"

namespace povmap::pipeline {

/// Which survey years feed the train and test sides. OO and NN stay within
/// the oldest or newest year, O-N trains on everything old and tests on
/// everything new, ON pools both years before the stratified split.
enum class RecencyMode { oo, nn, on_train_old_test_new, on_combined };

std::string_view to_string(RecencyMode m); // "OO", "NN", "O-N", "ON"
RecencyMode recency_from_string(std::string_view s); // Error("BadConfig")

struct RecencyConfig {
    RecencyMode mode = RecencyMode::on_combined;
    int oldest_year = 0; // 0 resolves to the earliest year in the data
    int newest_year = 0; // 0 resolves to the latest
};

enum class WeightScheme { none, ens };

std::string_view to_string(WeightScheme s);
WeightScheme weight_scheme_from_string(std::string_view s); // Error("BadConfig")

/// Effective-number-of-samples weighting over equal-width bins of the
/// training mean wealth.
struct WeightConfig {
    WeightScheme scheme = WeightScheme::none;
    double beta = 0.9;
    int n_bins = 10;

    void validate() const; // Error("BadConfig") unless beta in [0,1), n_bins >= 2
};

/// Search budget. Candidates are sampled independently per run; explicit
/// candidates replace the sampler when supplied (pinning a known space).
struct SearchSpec {
    int n_candidates = 200;
    int n_folds = 4;
    int n_runs = 3;
    std::uint64_t seed = 0;
    std::vector<gbrt::Hyperparams> explicit_candidates;

    void validate() const; // Error("BadConfig")

    static SearchSpec ci_profile(std::uint64_t seed);   // 20 x 2 x 1
    static SearchSpec full_profile(std::uint64_t seed); // 200 x 4 x 3
};

struct SplitResult {
    std::vector<std::size_t> train; // indices into the stats list, ascending
    std::vector<std::size_t> test;
    std::vector<std::string> warnings;
};

/// 80/20-style split stratified over the 10 equal-width wealth bins: per bin,
/// floor(test_frac * n) members go to test, so every bin's test share is
/// within one item of the target. Single-member bins stay in train with a
/// warning. Depends only on the stats and seed, never on coordinates, so the
/// split is shared across relocation modes. Error("TooFewSamples") below 10
/// clusters.
SplitResult stratified_split(const std::vector<groundtruth::IWIStats> &stats,
                             double test_frac = 0.2, std::uint64_t seed = 0);

/// (1 - beta) / (1 - beta^n); 1 for beta = 0 or n = 1.
double ens_raw_weight(double beta, std::size_t bin_count);

/// Per-cluster weight: the raw bin weight of the cluster's wealth bin,
/// rescaled so the mean weight is exactly 1. scheme none returns all ones.
std::vector<double> ens_weights(const std::vector<double> &train_mu, const WeightConfig &cfg);

/// Fold id per row, stratified over the 10 wealth bins: members of each bin
/// are shuffled and dealt round-robin, so fold bin counts differ by at most
/// one. Guarantees no empty fold for n >= n_folds.
std::vector<int> stratified_folds(const std::vector<double> &mu, int n_folds,
                                  std::uint64_t seed);

/// One draw from the documented search distributions: n_trees in [50, 500]
/// log-uniform, max_depth in {3..10}, learning_rate in [0.01, 0.3]
/// log-uniform, min_samples_leaf in {1..20}, l2_leaf_reg in [0, 10],
/// subsample rows/cols in [0.6, 1.0]. random_seed is left 0; the protocol
/// stamps per-(run, candidate, fold) seeds on top.
gbrt::Hyperparams sample_hyperparams(Rng &rng);

/// Population std per target over the dataset; zero spread falls back to 1
/// so standardized losses stay finite.
std::array<double, 2> target_scales(const gbrt::Dataset &d);

/// Weighted mean over rows of the mean per-target squared error after
/// dividing each target's residual by its scale. Equal target weights keep
/// sigma's smaller scale from being drowned by mu.
double weighted_standardized_mse(const gbrt::GBRTEnsemble &model, const gbrt::Dataset &subset,
                                 const std::array<double, 2> &scales);

struct Candidate {
    gbrt::Hyperparams hp;
    std::vector<double> fold_losses; // empty when failed
    double mean_loss = std::numeric_limits<double>::quiet_NaN();
    bool failed = false;
    std::string failure; // error kind

    bool operator==(const Candidate &) const = default;
};

struct SearchResult {
    std::vector<Candidate> table; // candidate order
    std::size_t best_index = 0;
    std::vector<int> folds; // fold id per train row

    const gbrt::Hyperparams &best() const { return table[best_index].hp; }
};

/// Random hyperparameter search with stratified k-fold cross validation.
/// Scores are the mean over folds of weighted_standardized_mse against scales
/// computed once on the full training set; the winner is the lowest mean with
/// ties going to the earlier candidate. A candidate whose fit throws is
/// recorded as failed and skipped. Error("TooFewSamples") when the training
/// set has fewer than 2 rows per fold, Error("SearchFailed") when every
/// candidate fails.
SearchResult random_search_cv(const gbrt::Dataset &train, const SearchSpec &spec);

struct DataSelection {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    int oldest_year = 0;
    int newest_year = 0;
    std::vector<std::string> warnings;
};

/// Applies the recency mode: picks the year subsets and, for the stratified
/// modes, splits them 80/20. O-N puts every oldest-year cluster in train and
/// every newest-year cluster in test.
DataSelection select_by_recency(const std::vector<groundtruth::IWIStats> &stats,
                                const RecencyConfig &rc, double test_frac,
                                std::uint64_t seed);

/// Ground truth and features for every cluster, rows aligned with the stats
/// list (cluster table order). Relocation moves coordinates before feature
/// extraction; it never touches the wealth stats.
struct ModelingData {
    std::vector<groundtruth::IWIStats> stats;
    features::FeatureMatrix matrix;
    std::vector<std::string> warnings;
};

ModelingData build_modeling_data(const ingest::DatasetBundle &bundle,
                                 groundtruth::RelocationMode relocation,
                                 const features::FeatureConfig &fcfg = {});

/// Rows of the feature matrix at the given stat indices as a modeling
/// dataset; weights, when given, are parallel to idx.
gbrt::Dataset make_dataset(const ModelingData &md, const std::vector<std::size_t> &idx,
                           const std::vector<double> &weights = {});

struct RunRecord {
    std::uint64_t run_seed = 0;
    gbrt::Hyperparams chosen;
    std::vector<double> fold_losses; // winning candidate
    double cv_loss = 0.0;
    evalreport::EvalMetrics test;

    bool operator==(const RunRecord &) const = default;
};

/// Everything needed to reproduce and audit a training experiment. No
/// wall-clock fields: rerunning the same fingerprint and seed must yield a
/// byte-identical card.
struct ModelCard {
    std::string recency;
    int oldest_year = 0;
    int newest_year = 0;
    std::string relocation;
    std::string weight_scheme;
    double beta = 0.9;
    int n_bins = 10;
    int n_candidates = 0;
    int n_folds = 0;
    int n_runs = 0;
    std::uint64_t seed = 0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::size_t n_features = 0;
    std::vector<RunRecord> runs;
    evalreport::EvalMetrics mean_test; // metrics averaged across runs
    std::vector<std::string> warnings;

    bool operator==(const ModelCard &) const = default;
};

nlohmann::json card_to_json(const ModelCard &card);
ModelCard card_from_json(const nlohmann::json &j); // Error("BadCard")
void write_card(const std::filesystem::path &file, const ModelCard &card);
ModelCard read_card(const std::filesystem::path &file);

struct TrainOutcome {
    ModelCard card;
    gbrt::GBRTEnsemble model; // the final run's refit
    gbrt::Dataset train_set;  // the final run's splits
    gbrt::Dataset test_set;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

/// The full protocol: ground truth, relocation, features, then n_runs times
/// (split per recency, weights, search, refit on the whole train side,
/// evaluate on test) with run seeds derived from spec.seed. The card reports
/// per-run and mean metrics.
TrainOutcome train_final(const ingest::DatasetBundle &bundle, const RecencyConfig &recency,
                         groundtruth::RelocationMode relocation, const WeightConfig &weights,
                         const SearchSpec &spec,
                         const features::FeatureConfig &fcfg = {});

/// Rebuilds the final run's train/test selection from a persisted card, so a
/// saved model can be re-scored on its own held-out clusters without
/// retraining. Throws Error("BadCard") when the card's run count is not
/// positive.
DataSelection selection_from_card(const std::vector<groundtruth::IWIStats> &stats,
                                  const ModelCard &card);

} // namespace povmap::pipeline
