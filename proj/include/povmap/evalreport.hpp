#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "povmap/csv.hpp"
#include "povmap/gbrt.hpp"

namespace povmap::evalreport {

inline constexpr std::size_t kQuintiles = 5;

/// Error bundle for one (model, test set) pairing. eps_* are NRMSE values:
/// RMSE divided by the population std of the true targets on the same test
/// set, so 1.0 marks the trivial mean predictor.
struct EvalMetrics {
    double eps_mu = 0.0;
    double eps_sigma = 0.0;
    double rmse_mu = 0.0;
    double rmse_sigma = 0.0;
    std::size_t n_test = 0;

    bool operator==(const EvalMetrics &) const = default;
};

double mean(const std::vector<double> &values);

/// Std with divisor n, matching the household aggregation convention.
double population_std(const std::vector<double> &values);

double rmse(const std::vector<double> &y_true, const std::vector<double> &y_pred);

/// RMSE / population-std(y_true). Needs equal lengths >= 2 and a non-constant
/// truth vector, else Error("LengthMismatch") / Error("TooFew") /
/// Error("ConstantTruth").
double nrmse(const std::vector<double> &y_true, const std::vector<double> &y_pred);

/// Same numerator with a caller-supplied positive denominator. This is the
/// escape hatch for normalizing against a reference spread (say the training
/// split) instead of the test truth.
double nrmse_scaled(const std::vector<double> &y_true, const std::vector<double> &y_pred,
                    double denominator);

EvalMetrics evaluate_predictions(const std::vector<double> &mu_true,
                                 const std::vector<double> &sigma_true,
                                 const std::vector<double> &mu_pred,
                                 const std::vector<double> &sigma_pred);

/// Predicts over the dataset rows and scores against its targets. Weights on
/// the dataset are ignored; they only matter during fitting.
EvalMetrics evaluate_model(const gbrt::GBRTEnsemble &model, const gbrt::Dataset &test);

/// Rank-based assignment into 5 equally populated bins (0 = poorest fifth).
/// Sizes differ by at most one, the first bins absorb the remainder, and ties
/// keep input order. Throws Error("TooFew") below 5 values and
/// Error("BadValue") on non-finite input.
std::vector<int> quintile_bins(const std::vector<double> &values);

struct IntersectionCell {
    std::size_t count = 0;
    double rmse_mu = 0.0; // meaningful only when count > 0

    bool present() const { return count > 0; }
    bool operator==(const IntersectionCell &) const = default;
};

/// RMSE of predicted mean wealth per settlement x true-wealth quintile.
/// Recombining the cells by weighted quadratic mean returns the overall RMSE.
struct IntersectionTable {
    // [settlement][quintile], settlement 0 = rural, 1 = urban
    std::array<std::array<IntersectionCell, kQuintiles>, 2> cells{};
    std::vector<int> quintile; // bin per evaluation row
    double overall_rmse_mu = 0.0;
    std::size_t n = 0;
};

IntersectionTable intersection_table(const std::vector<bool> &urban,
                                     const std::vector<double> &mu_true,
                                     const std::vector<double> &mu_pred);

/// Mean/std relationship summary for one settlement group and one source
/// (predicted or true). The quadratic fit needs at least 3 points and 3
/// distinct mu values; short or degenerate groups report the correlation only.
struct SeriesStats {
    std::size_t n = 0;
    bool r_defined = false;
    double r = 0.0;
    bool has_fit = false;
    std::array<double, 3> coeffs{}; // c0 + c1*mu + c2*mu^2
};

SeriesStats series_stats(const std::vector<double> &mu, const std::vector<double> &sigma);

struct VariabilityReport {
    std::array<SeriesStats, 2> predicted; // [0] = rural, [1] = urban
    std::array<SeriesStats, 2> actual;
};

VariabilityReport variability(const std::vector<bool> &urban,
                              const std::vector<double> &mu_pred,
                              const std::vector<double> &sigma_pred,
                              const std::vector<double> &mu_true,
                              const std::vector<double> &sigma_true);

/// Product-moment correlation. Throws Error("TooFew") below 2 points,
/// Error("LengthMismatch"), or Error("ConstantInput") when either side has no
/// spread. Result is clamped into [-1, 1].
double pearson(const std::vector<double> &x, const std::vector<double> &y);

/// Cross-application grid: cells[i][j] scores the model of country i on the
/// test split of country j, so the diagonal is the within-country evaluation.
struct TransferMatrix {
    std::array<std::array<EvalMetrics, 2>, 2> cells{};
};

/// Both models must share a column manifest (Error("ColumnMismatch")); the
/// off-diagonal entries apply a model unchanged to the other test split.
TransferMatrix transfer(const gbrt::GBRTEnsemble &model_a, const gbrt::GBRTEnsemble &model_b,
                        const gbrt::Dataset &test_a, const gbrt::Dataset &test_b);

// Report emission. Absent or undefined numeric cells render as "-" in the CSV
// tables and null in the JSON summaries.

csv::Table metrics_csv(const std::vector<std::pair<std::string, EvalMetrics>> &rows);
csv::Table intersection_csv(const IntersectionTable &t);
csv::Table variability_csv(const VariabilityReport &r);
csv::Table transfer_csv(const TransferMatrix &m, const std::string &name_a,
                        const std::string &name_b);

nlohmann::json metrics_json(const EvalMetrics &m);
nlohmann::json intersection_json(const IntersectionTable &t);
nlohmann::json variability_json(const VariabilityReport &r);
nlohmann::json transfer_json(const TransferMatrix &m, const std::string &name_a,
                             const std::string &name_b);

} // namespace povmap::evalreport
