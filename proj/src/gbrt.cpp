#include "povmap/gbrt.hpp"

#include "povmap/common.hpp"
#include "povmap/kernels.hpp"
#include "povmap/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <utility>

namespace povmap::gbrt {

namespace {

// a split must beat this share of the node's squared residual mass, which
// keeps float noise on constant targets from spawning trees
constexpr double kGainEps = 1e-12;

struct NodeSums {
    double w = 0.0;
    double s[2] = {0.0, 0.0}; // sum of w * r
    double q[2] = {0.0, 0.0}; // sum of w * r^2

    void add(double wi, double r0, double r1) {
        w += wi;
        s[0] += wi * r0;
        q[0] += wi * r0 * r0;
        s[1] += wi * r1;
        q[1] += wi * r1 * r1;
    }
};

// sum over active targets of S^2/W, the part of the weighted SSE a split can
// change
double score_of(const NodeSums &n, const bool active[2]) {
    if (n.w <= 0.0) return 0.0;
    double s = 0.0;
    for (int t = 0; t < 2; ++t)
        if (active[t]) s += n.s[t] * n.s[t] / n.w;
    return s;
}

struct BestSplit {
    bool found = false;
    double gain = 0.0;
    std::uint32_t col = 0;
    double threshold = 0.0;
    bool missing_left = true;
};

struct TreeBuilder {
    const Dataset &d;
    const Hyperparams &hp;
    const std::vector<double> &w;               // normalized weights
    const std::vector<std::array<double, 2>> &resid;
    const std::vector<std::uint32_t> &cols;     // allowed columns, ascending
    bool active[2];

    std::vector<TreeNode> nodes;

    // scratch reused across nodes
    std::vector<std::pair<double, std::uint32_t>> sorted;
    std::vector<std::uint32_t> missing;

    BestSplit search(const std::vector<std::uint32_t> &rows, const NodeSums &total) {
        BestSplit best;
        const double parent_score = score_of(total, active);
        const double min_gain =
            kGainEps * std::max(1.0, (active[0] ? total.q[0] : 0.0) +
                                         (active[1] ? total.q[1] : 0.0));
        const std::size_t msl = static_cast<std::size_t>(hp.min_samples_leaf);

        for (std::uint32_t c : cols) {
            sorted.clear();
            missing.clear();
            NodeSums miss;
            for (std::uint32_t i : rows) {
                const double x = d.rows[i][c];
                if (std::isnan(x)) {
                    missing.push_back(i);
                    miss.add(w[i], resid[i][0], resid[i][1]);
                } else {
                    sorted.emplace_back(x, i);
                }
            }
            if (sorted.size() < 2) continue;
            std::sort(sorted.begin(), sorted.end());

            NodeSums prefix;
            for (std::size_t k = 1; k < sorted.size(); ++k) {
                const std::uint32_t i = sorted[k - 1].second;
                prefix.add(w[i], resid[i][0], resid[i][1]);
                const double lo = sorted[k - 1].first, hi = sorted[k].first;
                if (!(hi > lo)) continue;
                double thr = (lo + hi) * 0.5;
                if (!(thr < hi)) thr = lo; // adjacent doubles round up
                for (bool ml : {true, false}) {
                    const std::size_t n_left = k + (ml ? missing.size() : 0);
                    const std::size_t n_right = rows.size() - n_left;
                    if (n_left < msl || n_right < msl) continue;
                    NodeSums left = prefix;
                    if (ml) {
                        left.w += miss.w;
                        for (int t = 0; t < 2; ++t) {
                            left.s[t] += miss.s[t];
                            left.q[t] += miss.q[t];
                        }
                    }
                    NodeSums right;
                    right.w = total.w - left.w;
                    for (int t = 0; t < 2; ++t) {
                        right.s[t] = total.s[t] - left.s[t];
                        right.q[t] = total.q[t] - left.q[t];
                    }
                    if (!(left.w > 0.0) || !(right.w > 0.0)) continue;
                    const double gain =
                        score_of(left, active) + score_of(right, active) - parent_score;
                    if (gain > best.gain && gain > min_gain) {
                        best = {true, gain, c, thr, ml};
                    }
                    if (missing.empty()) break; // both directions identical
                }
            }
        }
        return best;
    }

    // returns the node slot, or -1 when the node stays unsplit at the root
    std::int32_t build(const std::vector<std::uint32_t> &rows, int depth) {
        NodeSums total;
        for (std::uint32_t i : rows) total.add(w[i], resid[i][0], resid[i][1]);

        BestSplit split;
        if (depth < hp.max_depth &&
            rows.size() >= 2 * static_cast<std::size_t>(hp.min_samples_leaf))
            split = search(rows, total);

        const std::int32_t slot = static_cast<std::int32_t>(nodes.size());
        nodes.emplace_back();
        if (!split.found) {
            TreeNode &leaf = nodes[slot];
            for (int t = 0; t < 2; ++t)
                if (active[t])
                    leaf.value[t] =
                        hp.learning_rate * total.s[t] / (total.w + hp.l2_leaf_reg);
            return slot;
        }

        std::vector<std::uint32_t> left_rows, right_rows;
        left_rows.reserve(rows.size());
        for (std::uint32_t i : rows) {
            const double x = d.rows[i][split.col];
            const bool go_left =
                std::isnan(x) ? split.missing_left : x <= split.threshold;
            (go_left ? left_rows : right_rows).push_back(i);
        }

        nodes[slot].col = split.col;
        nodes[slot].threshold = split.threshold;
        nodes[slot].missing_left = split.missing_left;
        nodes[slot].gain = split.gain;
        const std::int32_t l = build(left_rows, depth + 1);
        const std::int32_t r = build(right_rows, depth + 1);
        nodes[slot].left = l;
        nodes[slot].right = r;
        return slot;
    }
};

const TreeNode &leaf_for(const Tree &tree, const std::vector<double> &row) {
    const TreeNode *n = &tree.nodes[0];
    while (!n->is_leaf()) {
        const double x = row[n->col];
        const bool go_left = std::isnan(x) ? n->missing_left : x <= n->threshold;
        n = &tree.nodes[static_cast<std::size_t>(go_left ? n->left : n->right)];
    }
    return *n;
}

// k of n without replacement, ascending
std::vector<std::uint32_t> sample_indices(std::size_t n, double fraction, Rng &rng) {
    std::vector<std::uint32_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<std::uint32_t>(i);
    if (fraction >= 1.0) return all;
    const std::size_t k =
        std::max<std::size_t>(1, static_cast<std::size_t>(fraction * static_cast<double>(n)));
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.next_below(n - i);
        std::swap(all[i], all[j]);
    }
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
}

double training_loss(const std::vector<double> &w,
                     const std::vector<std::array<double, 2>> &resid,
                     std::vector<double> &r0, std::vector<double> &r1) {
    const std::size_t n = w.size();
    r0.resize(n);
    r1.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        r0[i] = resid[i][0];
        r1[i] = resid[i][1];
    }
    double sums[5];
    kernels::ops().weighted_pair_sums(w.data(), r0.data(), r1.data(), n, sums);
    return sums[2] + sums[4];
}

nlohmann::json node_to_json(const TreeNode &n) {
    if (n.is_leaf()) return {{"value", {n.value[0], n.value[1]}}};
    return {{"col", n.col},           {"threshold", n.threshold},
            {"missing_left", n.missing_left}, {"gain", n.gain},
            {"left", n.left},         {"right", n.right}};
}

TreeNode node_from_json(const nlohmann::json &j) {
    TreeNode n;
    if (j.contains("value")) {
        n.value[0] = j.at("value").at(0).get<double>();
        n.value[1] = j.at("value").at(1).get<double>();
        return n;
    }
    n.col = j.at("col").get<std::uint32_t>();
    n.threshold = j.at("threshold").get<double>();
    n.missing_left = j.at("missing_left").get<bool>();
    n.gain = j.at("gain").get<double>();
    n.left = j.at("left").get<std::int32_t>();
    n.right = j.at("right").get<std::int32_t>();
    return n;
}

} // namespace

void Hyperparams::validate() const {
    if (n_trees < 0 || n_trees > 100000)
        throw Error("BadHyperparams", "n_trees out of range");
    if (max_depth < 1 || max_depth > 64)
        throw Error("BadHyperparams", "max_depth out of range");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw Error("BadHyperparams", "learning_rate must be positive");
    if (min_samples_leaf < 1)
        throw Error("BadHyperparams", "min_samples_leaf must be at least 1");
    if (!(l2_leaf_reg >= 0.0) || !std::isfinite(l2_leaf_reg))
        throw Error("BadHyperparams", "l2_leaf_reg must be non-negative");
    if (!(subsample_rows > 0.0) || subsample_rows > 1.0)
        throw Error("BadHyperparams", "subsample_rows must lie in (0,1]");
    if (!(subsample_cols > 0.0) || subsample_cols > 1.0)
        throw Error("BadHyperparams", "subsample_cols must lie in (0,1]");
}

GBRTEnsemble fit(const Dataset &d, const Hyperparams &hp, FitDiagnostics *diag) {
    hp.validate();
    const std::size_t n = d.rows.size();
    if (n < 2 || d.targets.size() != n)
        throw Error("BadTrainingData", "need at least 2 rows with matching targets");
    if (!d.weights.empty() && d.weights.size() != n)
        throw Error("BadTrainingData", "weight count differs from row count");
    const std::size_t m = d.columns.size();
    for (const auto &row : d.rows)
        if (row.size() != m)
            throw Error("BadTrainingData", "row width differs from column manifest");
    for (const auto &y : d.targets)
        if (!std::isfinite(y[0]) || !std::isfinite(y[1]))
            throw Error("BadTrainingData", "targets must be finite");

    // normalize weights to mean 1 so l2_leaf_reg is scale-invariant
    std::vector<double> w(n, 1.0);
    if (!d.weights.empty()) {
        double total = 0.0;
        for (double wi : d.weights) {
            if (!(wi > 0.0) || !std::isfinite(wi))
                throw Error("NonPositiveWeight", "sample weights must be positive");
            total += wi;
        }
        const double scale = static_cast<double>(n) / total;
        for (std::size_t i = 0; i < n; ++i) w[i] = d.weights[i] * scale;
    }

    GBRTEnsemble model;
    model.columns = d.columns;
    model.joint = hp.joint_trees;

    {
        std::vector<double> y0(n), y1(n);
        for (std::size_t i = 0; i < n; ++i) {
            y0[i] = d.targets[i][0];
            y1[i] = d.targets[i][1];
        }
        double sums[5];
        kernels::ops().weighted_pair_sums(w.data(), y0.data(), y1.data(), n, sums);
        model.base = {sums[1] / sums[0], sums[3] / sums[0]};
    }

    std::vector<std::array<double, 2>> resid(n);
    for (std::size_t i = 0; i < n; ++i)
        resid[i] = {d.targets[i][0] - model.base[0], d.targets[i][1] - model.base[1]};

    std::vector<double> scratch0, scratch1;
    if (diag) {
        diag->loss_per_tree.clear();
        diag->loss_per_tree.push_back(training_loss(w, resid, scratch0, scratch1));
    }

    for (int stage = 0; stage < hp.n_trees; ++stage) {
        Rng rng(mix_seed(hp.random_seed, static_cast<std::uint64_t>(stage)));
        const auto rows = sample_indices(n, hp.subsample_rows, rng);
        const auto cols = sample_indices(m, hp.subsample_cols, rng);

        bool any_split = false;
        const int per_stage = hp.joint_trees ? 1 : 2;
        for (int part = 0; part < per_stage; ++part) {
            TreeBuilder builder{d, hp, w, resid, cols,
                                {hp.joint_trees || part == 0, hp.joint_trees || part == 1},
                                {}, {}, {}};
            builder.build(rows, 0);
            if (builder.nodes.size() < 2) continue; // root only, nothing learned
            any_split = true;

            Tree tree{std::move(builder.nodes)};
            for (std::size_t i = 0; i < n; ++i) {
                const auto &leaf = leaf_for(tree, d.rows[i]);
                resid[i][0] -= leaf.value[0];
                resid[i][1] -= leaf.value[1];
            }
            model.trees.push_back(std::move(tree));
            if (diag)
                diag->loss_per_tree.push_back(training_loss(w, resid, scratch0, scratch1));
        }
        if (!any_split) break;
    }
    return model;
}

std::vector<std::array<double, 2>> predict(const GBRTEnsemble &m,
                                           const std::vector<std::string> &columns,
                                           const std::vector<std::vector<double>> &rows) {
    if (columns != m.columns)
        throw Error("ColumnMismatch", "feature columns differ from the training manifest");
    std::vector<std::array<double, 2>> out;
    out.reserve(rows.size());
    for (const auto &row : rows) {
        if (row.size() != m.columns.size())
            throw Error("ColumnMismatch", "row width differs from the training manifest");
        std::array<double, 2> p = m.base;
        for (const auto &tree : m.trees) {
            const auto &leaf = leaf_for(tree, row);
            p[0] += leaf.value[0];
            p[1] += leaf.value[1];
        }
        p[0] = std::clamp(p[0], 0.0, 100.0);
        p[1] = std::max(p[1], 0.0);
        out.push_back(p);
    }
    return out;
}

std::vector<double> importance(const GBRTEnsemble &m) {
    std::vector<double> gain(m.columns.size(), 0.0);
    double total = 0.0;
    for (const auto &tree : m.trees)
        for (const auto &node : tree.nodes)
            if (!node.is_leaf()) {
                gain[node.col] += node.gain;
                total += node.gain;
            }
    if (total > 0.0)
        for (double &g : gain) g /= total;
    return gain;
}

std::string model_to_json(const GBRTEnsemble &m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto &tree : m.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto &node : tree.nodes) nodes.push_back(node_to_json(node));
        trees.push_back({{"nodes", std::move(nodes)}});
    }
    const nlohmann::json doc = {{"format", "povmap-gbrt"},
                                {"version", 1},
                                {"joint", m.joint},
                                {"base", {m.base[0], m.base[1]}},
                                {"columns", m.columns},
                                {"trees", std::move(trees)}};
    return doc.dump();
}

GBRTEnsemble model_from_json(const std::string &text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception &e) {
        throw Error("BadModel", std::string("model is not valid json: ") + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != "povmap-gbrt")
            throw Error("BadModel", "unrecognized model format tag");
        if (doc.at("version").get<int>() != 1)
            throw Error("BadModel", "unsupported model version");
        GBRTEnsemble m;
        m.joint = doc.at("joint").get<bool>();
        m.base[0] = doc.at("base").at(0).get<double>();
        m.base[1] = doc.at("base").at(1).get<double>();
        m.columns = doc.at("columns").get<std::vector<std::string>>();
        for (const auto &jt : doc.at("trees")) {
            Tree tree;
            for (const auto &jn : jt.at("nodes")) tree.nodes.push_back(node_from_json(jn));
            for (const auto &node : tree.nodes) {
                const auto sz = static_cast<std::int32_t>(tree.nodes.size());
                if (node.is_leaf()) continue;
                if (node.left < 0 || node.left >= sz || node.right < 0 || node.right >= sz ||
                    node.col >= m.columns.size())
                    throw Error("BadModel", "tree node references are out of range");
            }
            if (tree.nodes.empty()) throw Error("BadModel", "empty tree");
            m.trees.push_back(std::move(tree));
        }
        return m;
    } catch (const nlohmann::json::exception &e) {
        throw Error("BadModel", std::string("model json misses required fields: ") + e.what());
    }
}

void write_model(const std::filesystem::path &file, const GBRTEnsemble &m) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error("IoError", "cannot write " + file.string());
    out << model_to_json(m) << "\n";
}

GBRTEnsemble read_model(const std::filesystem::path &file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("IoError", "cannot read " + file.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return model_from_json(text);
}

} // namespace povmap::gbrt
