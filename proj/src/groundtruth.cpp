#include "povmap/groundtruth.hpp"

#include "povmap/common.hpp"
#include "povmap/csv.hpp"
#include "povmap/geo.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <unordered_set>

namespace povmap::groundtruth {

using nlohmann::json;

AssetMatrix build_asset_matrix(const std::vector<ingest::HouseholdRow> &households,
                               const std::vector<ingest::AssetSpec> &assets) {
    AssetMatrix m;
    m.columns.reserve(assets.size());
    for (const auto &a : assets) m.columns.push_back(a.name);
    m.household_ids.reserve(households.size());
    m.cluster_ids.reserve(households.size());
    m.rows.reserve(households.size());
    for (const auto &h : households) {
        if (h.assets.size() != assets.size()) {
            throw Error("WeightDimensionMismatch",
                        "household '" + h.household_id + "' has " +
                            std::to_string(h.assets.size()) + " assets, expected " +
                            std::to_string(assets.size()));
        }
        m.household_ids.push_back(h.household_id);
        m.cluster_ids.push_back(h.cluster_id);
        m.rows.push_back(h.assets);
    }
    return m;
}

namespace {

struct ColumnStats {
    std::vector<double> mean;
    std::vector<double> std;  // population std, exactly 0 for dropped columns
    std::vector<std::size_t> kept; // indices of non-constant columns
};

ColumnStats column_stats(const AssetMatrix &m) {
    const std::size_t n = m.rows.size();
    const std::size_t k = m.columns.size();
    ColumnStats cs;
    cs.mean.assign(k, 0.0);
    cs.std.assign(k, 0.0);
    for (const auto &row : m.rows) {
        for (std::size_t j = 0; j < k; ++j) cs.mean[j] += row[j];
    }
    for (std::size_t j = 0; j < k; ++j) cs.mean[j] /= static_cast<double>(n);
    for (const auto &row : m.rows) {
        for (std::size_t j = 0; j < k; ++j) {
            const double d = row[j] - cs.mean[j];
            cs.std[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < k; ++j) {
        const double var = cs.std[j] / static_cast<double>(n);
        // constant columns leave only rounding residue; treat it as zero
        const double scale = std::max(1.0, cs.mean[j] * cs.mean[j]);
        if (var <= 1e-24 * scale) {
            cs.std[j] = 0.0;
        } else {
            cs.std[j] = std::sqrt(var);
            cs.kept.push_back(j);
        }
    }
    return cs;
}

// Dominant eigenvector of a small symmetric PSD matrix by power iteration,
// deterministic start with a symmetry-breaking tilt.
std::vector<double> dominant_eigenvector(const std::vector<std::vector<double>> &c) {
    const std::size_t k = c.size();
    std::vector<double> v(k), next(k);
    for (std::size_t i = 0; i < k; ++i) v[i] = 1.0 + 1e-3 * static_cast<double>(i);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double &x : v) x /= norm;

    for (int iter = 0; iter < 100000; ++iter) {
        for (std::size_t i = 0; i < k; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += c[i][j] * v[j];
            next[i] = s;
        }
        norm = 0.0;
        for (double x : next) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            return v; // zero matrix, any unit vector is as good as another
        }
        double delta = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            next[i] /= norm;
            delta = std::max(delta, std::abs(next[i] - v[i]));
        }
        v = next;
        if (delta < 1e-14) break;
    }
    return v;
}

} // namespace

WeightSpec compute_asset_weights(const AssetMatrix &m) {
    const std::size_t n = m.rows.size();
    const std::size_t k = m.columns.size();
    if (n < 2) {
        throw Error("DegenerateMatrix", "need at least 2 households, got " +
                                            std::to_string(n));
    }
    const ColumnStats cs = column_stats(m);
    if (cs.kept.empty()) {
        throw Error("DegenerateMatrix", "all asset columns are constant");
    }

    // correlation matrix over kept columns
    const std::size_t kk = cs.kept.size();
    std::vector<std::vector<double>> corr(kk, std::vector<double>(kk, 0.0));
    for (const auto &row : m.rows) {
        for (std::size_t a = 0; a < kk; ++a) {
            const double za = (row[cs.kept[a]] - cs.mean[cs.kept[a]]) / cs.std[cs.kept[a]];
            for (std::size_t b = a; b < kk; ++b) {
                const double zb =
                    (row[cs.kept[b]] - cs.mean[cs.kept[b]]) / cs.std[cs.kept[b]];
                corr[a][b] += za * zb;
            }
        }
    }
    for (std::size_t a = 0; a < kk; ++a) {
        for (std::size_t b = a; b < kk; ++b) {
            corr[a][b] /= static_cast<double>(n);
            corr[b][a] = corr[a][b];
        }
    }

    const std::vector<double> ev = dominant_eigenvector(corr);

    WeightSpec w;
    w.columns = m.columns;
    w.loadings.assign(k, 0.0);
    w.col_mean = cs.mean;
    w.col_std = cs.std;
    double loading_sum = 0.0;
    for (std::size_t a = 0; a < kk; ++a) {
        w.loadings[cs.kept[a]] = ev[a];
        loading_sum += ev[a];
    }
    if (loading_sum < 0.0) {
        for (double &l : w.loadings) l = -l;
    }

    // reference score range for the 0..100 rescale
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto &row : m.rows) {
        double s = 0.0;
        for (std::size_t j : cs.kept) {
            s += w.loadings[j] * (row[j] - cs.mean[j]) / cs.std[j];
        }
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    if (!(hi > lo)) {
        throw Error("DegenerateMatrix", "reference population has a single score");
    }
    w.score_min = lo;
    w.score_max = hi;
    return w;
}

std::vector<double> compute_iwi(const AssetMatrix &m, const WeightSpec &w) {
    if (m.columns != w.columns) {
        throw Error("WeightDimensionMismatch",
                    "asset columns do not match the weight table");
    }
    const double span = w.score_max - w.score_min;
    if (!(span > 0.0)) {
        throw Error("WeightDimensionMismatch", "rescale span is not positive");
    }
    std::vector<double> out;
    out.reserve(m.rows.size());
    for (const auto &row : m.rows) {
        double s = 0.0;
        for (std::size_t j = 0; j < w.columns.size(); ++j) {
            if (w.col_std[j] == 0.0) continue; // dropped column
            s += w.loadings[j] * (row[j] - w.col_mean[j]) / w.col_std[j];
        }
        const double iwi = 100.0 * (s - w.score_min) / span;
        out.push_back(std::clamp(iwi, 0.0, 100.0));
    }
    return out;
}

std::string weight_spec_to_json(const WeightSpec &w) {
    json j;
    j["columns"] = w.columns;
    j["loadings"] = w.loadings;
    j["col_mean"] = w.col_mean;
    j["col_std"] = w.col_std;
    j["score_min"] = w.score_min;
    j["score_max"] = w.score_max;
    return j.dump(2) + "\n";
}

WeightSpec weight_spec_from_json(const std::string &text) {
    WeightSpec w;
    try {
        const json j = json::parse(text);
        w.columns = j.at("columns").get<std::vector<std::string>>();
        w.loadings = j.at("loadings").get<std::vector<double>>();
        w.col_mean = j.at("col_mean").get<std::vector<double>>();
        w.col_std = j.at("col_std").get<std::vector<double>>();
        w.score_min = j.at("score_min").get<double>();
        w.score_max = j.at("score_max").get<double>();
    } catch (const json::exception &e) {
        throw Error("ParseError", std::string("weight spec: ") + e.what());
    }
    const std::size_t k = w.columns.size();
    if (w.loadings.size() != k || w.col_mean.size() != k || w.col_std.size() != k) {
        throw Error("WeightDimensionMismatch", "weight spec arrays disagree in length");
    }
    return w;
}

std::vector<IWIStats> aggregate_clusters(const std::vector<std::string> &cluster_ids,
                                         const std::vector<double> &scores,
                                         const std::vector<ingest::ClusterRow> &clusters,
                                         std::vector<std::string> *warnings) {
    if (cluster_ids.size() != scores.size()) {
        throw Error("WeightDimensionMismatch", "scores and cluster ids differ in length");
    }
    struct Acc {
        double sum = 0.0, sum_sq = 0.0;
        std::size_t n = 0;
    };
    std::unordered_map<std::string, Acc> by_cluster;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        auto &a = by_cluster[cluster_ids[i]];
        a.sum += scores[i];
        a.sum_sq += scores[i] * scores[i];
        a.n += 1;
    }
    std::vector<IWIStats> out;
    out.reserve(clusters.size());
    for (const auto &c : clusters) {
        auto it = by_cluster.find(c.cluster_id);
        if (it == by_cluster.end() || it->second.n == 0) {
            throw Error("EmptyCluster", "cluster '" + c.cluster_id + "' has no households");
        }
        const Acc &a = it->second;
        IWIStats s;
        s.cluster_id = c.cluster_id;
        s.settlement = c.settlement;
        s.year = c.year;
        s.n_households = a.n;
        const double n = static_cast<double>(a.n);
        s.mu = a.sum / n;
        const double var = std::max(0.0, a.sum_sq / n - s.mu * s.mu);
        s.sigma = a.n == 1 ? 0.0 : std::sqrt(var);
        if (a.n == 1 && warnings != nullptr) {
            warnings->push_back("cluster '" + c.cluster_id +
                                "' has a single household, sigma set to 0");
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::string_view to_string(RelocationMode m) {
    switch (m) {
    case RelocationMode::none: return "none";
    case RelocationMode::rc: return "rc";
    case RelocationMode::ruc: return "ruc";
    }
    return "?";
}

RelocationMode relocation_mode_from_string(std::string_view s) {
    if (s == "none") return RelocationMode::none;
    if (s == "rc") return RelocationMode::rc;
    if (s == "ruc") return RelocationMode::ruc;
    throw Error("ParseError", "unknown relocation mode '" + std::string(s) + "'");
}

RelocationPlan relocate(const std::vector<ingest::ClusterRow> &clusters,
                        const std::vector<ingest::PlaceRow> &places,
                        RelocationMode mode) {
    RelocationPlan plan;
    plan.mode = mode;
    plan.assignments.reserve(clusters.size());
    for (const auto &c : clusters) {
        plan.assignments.push_back({c.cluster_id, "", 0.0});
    }
    if (mode == RelocationMode::none) {
        return plan;
    }

    // settlement-matched candidate places within the displacement radius
    std::vector<std::pair<std::string, geo::GeoPoint>> urban_pts, rural_pts;
    for (const auto &p : places) {
        (ingest::is_urban(p.kind) ? urban_pts : rural_pts).emplace_back(p.place_id, p.pt);
    }
    const auto urban_idx = geo::SpatialIndex::build(std::move(urban_pts));
    const auto rural_idx = geo::SpatialIndex::build(std::move(rural_pts));

    struct Cand {
        double dist;
        std::string place_id;
    };
    struct Entry {
        std::size_t cluster_slot;
        std::vector<Cand> cands; // sorted by (dist, place_id)
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        const auto &c = clusters[i];
        const bool urban = c.settlement == ingest::Settlement::urban;
        if (urban && mode == RelocationMode::rc) {
            continue; // rc never moves urban clusters
        }
        const auto &idx = urban ? urban_idx : rural_idx;
        if (idx.empty()) continue;
        const double radius = urban ? kUrbanRadiusKm : kRuralRadiusKm;
        Entry e;
        e.cluster_slot = i;
        for (const auto &[slot, dist] : idx.within_radius_slots(c.pt, radius)) {
            e.cands.push_back({dist, idx.id_of(slot)});
        }
        if (e.cands.empty()) continue;
        std::sort(e.cands.begin(), e.cands.end(), [](const Cand &a, const Cand &b) {
            if (a.dist != b.dist) return a.dist < b.dist;
            return a.place_id < b.place_id;
        });
        entries.push_back(std::move(e));
    }

    std::unordered_set<std::string> taken;
    std::vector<bool> done(entries.size(), false);
    for (;;) {
        // the unassigned cluster with the fewest live candidates goes next
        std::size_t pick = entries.size();
        std::size_t pick_count = 0;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (done[i]) continue;
            std::size_t live = 0;
            for (const auto &cand : entries[i].cands) {
                if (!taken.count(cand.place_id)) ++live;
            }
            if (live == 0) {
                done[i] = true; // candidates all taken: keeps noisy location
                continue;
            }
            const std::string &cid = clusters[entries[i].cluster_slot].cluster_id;
            if (pick == entries.size() || live < pick_count ||
                (live == pick_count &&
                 cid < clusters[entries[pick].cluster_slot].cluster_id)) {
                pick = i;
                pick_count = live;
            }
        }
        if (pick == entries.size()) break;

        for (const auto &cand : entries[pick].cands) {
            if (taken.count(cand.place_id)) continue;
            taken.insert(cand.place_id);
            auto &a = plan.assignments[entries[pick].cluster_slot];
            a.place_id = cand.place_id;
            a.distance_km = cand.dist;
            break;
        }
        done[pick] = true;
    }
    return plan;
}

std::vector<ingest::ClusterRow>
apply_relocation(const std::vector<ingest::ClusterRow> &clusters,
                 const std::vector<ingest::PlaceRow> &places,
                 const RelocationPlan &plan) {
    if (plan.assignments.size() != clusters.size()) {
        throw Error("WeightDimensionMismatch", "plan does not match cluster table");
    }
    std::unordered_map<std::string, geo::GeoPoint> place_pt;
    for (const auto &p : places) place_pt[p.place_id] = p.pt;
    std::vector<ingest::ClusterRow> out = clusters;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto &a = plan.assignments[i];
        if (a.cluster_id != out[i].cluster_id) {
            throw Error("WeightDimensionMismatch",
                        "plan order does not match cluster table");
        }
        if (a.keeps_noisy()) continue;
        auto it = place_pt.find(a.place_id);
        if (it == place_pt.end()) {
            throw Error("DanglingReference", "plan references unknown place '" +
                                                 a.place_id + "'");
        }
        out[i].pt = it->second;
    }
    return out;
}

void write_relocation_csv(const RelocationPlan &plan,
                          const std::filesystem::path &file) {
    csv::Table t;
    t.header = {"cluster_id", "place_id", "distance_km"};
    for (const auto &a : plan.assignments) {
        if (a.keeps_noisy()) {
            t.rows.push_back({a.cluster_id, "keep_noisy", ""});
        } else {
            t.rows.push_back({a.cluster_id, a.place_id, format_double(a.distance_km)});
        }
    }
    csv::write_csv(file, t);
}

double gini(const std::vector<double> &values) {
    if (values.empty()) {
        throw Error("AllZero", "gini of an empty list");
    }
    double total = 0.0;
    for (double v : values) {
        if (v < 0.0) {
            throw Error("NegativeValues", "gini requires nonnegative values");
        }
        total += v;
    }
    if (total == 0.0) {
        throw Error("AllZero", "gini of all-zero values");
    }
    std::vector<double> x = values;
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    // sum_ij |x_i - x_j| = 2 * sum_i (2i + 1 - n) x_(i), i zero-based ascending
    double pair_sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        pair_sum += (2.0 * static_cast<double>(i) + 1.0 - n) * x[i];
    }
    pair_sum *= 2.0;
    return pair_sum / (2.0 * n * n * (total / n));
}

std::vector<int> discretize_equal_width(const std::vector<double> &values, int k) {
    if (k < 2) {
        throw Error("BadBinCount", "need at least 2 bins, got " + std::to_string(k));
    }
    if (values.empty()) return {};
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    std::vector<int> bins(values.size(), 0);
    if (!(hi > lo)) {
        return bins; // all equal: single bin 0
    }
    const double width = (hi - lo) / static_cast<double>(k);
    for (std::size_t i = 0; i < values.size(); ++i) {
        int b = static_cast<int>(std::floor((values[i] - lo) / width));
        bins[i] = std::clamp(b, 0, k - 1); // right edge folds into the last bin
    }
    return bins;
}

} // namespace povmap::groundtruth
