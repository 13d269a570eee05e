#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

// Multi-target gradient-boosted regression trees for the (mu, sigma) pair.
// Plain stagewise least-squares boosting: each tree greedily splits on the
// weighted SSE reduction summed over both targets, leaf values are weighted
// residual means shrunk by the l2 term, rows with a missing feature follow a
// learned per-split default direction. Everything is deterministic for a
// fixed seed.
namespace povmap::gbrt {

struct Hyperparams {
    int n_trees = 200;
    int max_depth = 6;
    double learning_rate = 0.1;
    int min_samples_leaf = 5;
    double l2_leaf_reg = 3.0;
    double subsample_rows = 1.0; // row fraction per tree, (0,1]
    double subsample_cols = 1.0; // column fraction per tree, (0,1]
    std::uint64_t random_seed = 0;
    // one tree per stage with 2-vector leaves when true; two single-target
    // trees per stage when false (ablation)
    bool joint_trees = true;

    void validate() const; // Error("BadHyperparams")
    bool operator==(const Hyperparams &) const = default;
};

struct TreeNode {
    std::int32_t left = -1; // -1 marks a leaf
    std::int32_t right = -1;
    std::uint32_t col = 0;
    double threshold = 0.0;   // go left when x <= threshold
    bool missing_left = true; // learned default direction
    double gain = 0.0;        // weighted SSE reduction of this split
    // leaf contribution, learning rate already applied
    std::array<double, 2> value{0.0, 0.0};

    bool is_leaf() const { return left < 0; }
    bool operator==(const TreeNode &) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes; // preorder, nodes[0] is the root

    bool operator==(const Tree &) const = default;
};

struct GBRTEnsemble {
    std::array<double, 2> base{0.0, 0.0}; // weighted target means
    std::vector<std::string> columns;     // training column manifest
    std::vector<Tree> trees;
    bool joint = true;

    bool operator==(const GBRTEnsemble &) const = default;
};

struct FitDiagnostics {
    // weighted multi-target SSE on the training set: entry 0 after the base
    // prediction, then one entry per accepted tree. Non-increasing when
    // subsample_rows = 1 and learning_rate <= 1.
    std::vector<double> loss_per_tree;
};

struct Dataset {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;     // NaN = missing
    std::vector<std::array<double, 2>> targets; // (mu, sigma)
    std::vector<double> weights;               // empty means all ones
};

/// Trains the ensemble. Sample weights are normalized to mean 1 internally
/// so the l2 term is invariant to weight rescaling. Boosting stops early
/// when no split clears the gain threshold.
/// Throws Error("BadTrainingData") on size mismatches, fewer than 2 rows, or
/// non-finite targets; Error("NonPositiveWeight") when any weight <= 0.
GBRTEnsemble fit(const Dataset &d, const Hyperparams &hp, FitDiagnostics *diag = nullptr);

/// Predicts (mu, sigma) per row; mu is clipped to [0,100] and sigma to >= 0
/// at this output boundary only. Throws Error("ColumnMismatch") unless the
/// columns equal the training manifest and every row has that width.
std::vector<std::array<double, 2>> predict(const GBRTEnsemble &m,
                                           const std::vector<std::string> &columns,
                                           const std::vector<std::vector<double>> &rows);

/// Total split gain per manifest column, normalized to sum 1 when any split
/// exists; all zeros for a base-only model.
std::vector<double> importance(const GBRTEnsemble &m);

// Versioned JSON serialization; numbers survive the round trip exactly and
// the output carries no timestamps, so equal models give equal bytes.
std::string model_to_json(const GBRTEnsemble &m);
GBRTEnsemble model_from_json(const std::string &text); // Error("BadModel")
void write_model(const std::filesystem::path &file, const GBRTEnsemble &m);
GBRTEnsemble read_model(const std::filesystem::path &file);

} // namespace povmap::gbrt
