#include "povmap/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "povmap/common.hpp"

namespace povmap::pipeline {

namespace {

// stream ids for seed derivation; every consumer of randomness gets its own
// branch of the experiment seed
constexpr std::uint64_t kStreamSplit = 11;
constexpr std::uint64_t kStreamSearch = 12;
constexpr std::uint64_t kStreamFolds = 13;
constexpr std::uint64_t kStreamFit = 14;
constexpr std::uint64_t kStreamRefit = 15;

constexpr int kWealthBins = 10;

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

double mean_of(const std::vector<double> &v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

nlohmann::json hp_to_json(const gbrt::Hyperparams &hp) {
    nlohmann::json j;
    j["n_trees"] = hp.n_trees;
    j["max_depth"] = hp.max_depth;
    j["learning_rate"] = hp.learning_rate;
    j["min_samples_leaf"] = hp.min_samples_leaf;
    j["l2_leaf_reg"] = hp.l2_leaf_reg;
    j["subsample_rows"] = hp.subsample_rows;
    j["subsample_cols"] = hp.subsample_cols;
    j["random_seed"] = hp.random_seed;
    j["joint_trees"] = hp.joint_trees;
    return j;
}

gbrt::Hyperparams hp_from_json(const nlohmann::json &j) {
    gbrt::Hyperparams hp;
    hp.n_trees = j.at("n_trees").get<int>();
    hp.max_depth = j.at("max_depth").get<int>();
    hp.learning_rate = j.at("learning_rate").get<double>();
    hp.min_samples_leaf = j.at("min_samples_leaf").get<int>();
    hp.l2_leaf_reg = j.at("l2_leaf_reg").get<double>();
    hp.subsample_rows = j.at("subsample_rows").get<double>();
    hp.subsample_cols = j.at("subsample_cols").get<double>();
    hp.random_seed = j.at("random_seed").get<std::uint64_t>();
    hp.joint_trees = j.at("joint_trees").get<bool>();
    return hp;
}

nlohmann::json eval_to_json(const evalreport::EvalMetrics &m) {
    return evalreport::metrics_json(m);
}

evalreport::EvalMetrics eval_from_json(const nlohmann::json &j) {
    evalreport::EvalMetrics m;
    m.eps_mu = j.at("eps_mu").get<double>();
    m.eps_sigma = j.at("eps_sigma").get<double>();
    m.rmse_mu = j.at("rmse_mu").get<double>();
    m.rmse_sigma = j.at("rmse_sigma").get<double>();
    m.n_test = j.at("n_test").get<std::size_t>();
    return m;
}

} // namespace

std::string_view to_string(RecencyMode m) {
    switch (m) {
    case RecencyMode::oo: return "OO";
    case RecencyMode::nn: return "NN";
    case RecencyMode::on_train_old_test_new: return "O-N";
    case RecencyMode::on_combined: return "ON";
    }
    return "ON";
}

RecencyMode recency_from_string(std::string_view s) {
    const std::string k = lower(s);
    if (k == "oo" || k == "o-o") return RecencyMode::oo;
    if (k == "nn" || k == "n-n") return RecencyMode::nn;
    if (k == "o-n") return RecencyMode::on_train_old_test_new;
    if (k == "on") return RecencyMode::on_combined;
    throw Error("BadConfig", "unknown recency mode '" + std::string(s) +
                                 "' (expected OO, NN, O-N, or ON)");
}

std::string_view to_string(WeightScheme s) {
    return s == WeightScheme::ens ? "ens" : "none";
}

WeightScheme weight_scheme_from_string(std::string_view s) {
    const std::string k = lower(s);
    if (k == "none") return WeightScheme::none;
    if (k == "ens") return WeightScheme::ens;
    throw Error("BadConfig", "unknown weight scheme '" + std::string(s) +
                                 "' (expected none or ens)");
}

void WeightConfig::validate() const {
    if (!std::isfinite(beta) || beta < 0.0 || beta >= 1.0) {
        throw Error("BadConfig", "weight beta must be in [0, 1)");
    }
    if (n_bins < 2) throw Error("BadConfig", "weight n_bins must be at least 2");
}

void SearchSpec::validate() const {
    if (explicit_candidates.empty() && n_candidates < 1) {
        throw Error("BadConfig", "need at least one search candidate");
    }
    if (n_folds < 2) throw Error("BadConfig", "cross validation needs at least 2 folds");
    if (n_runs < 1) throw Error("BadConfig", "need at least one run");
}

SearchSpec SearchSpec::ci_profile(std::uint64_t seed) {
    SearchSpec s;
    s.n_candidates = 20;
    s.n_folds = 2;
    s.n_runs = 1;
    s.seed = seed;
    return s;
}

SearchSpec SearchSpec::full_profile(std::uint64_t seed) {
    SearchSpec s;
    s.n_candidates = 200;
    s.n_folds = 4;
    s.n_runs = 3;
    s.seed = seed;
    return s;
}

SplitResult stratified_split(const std::vector<groundtruth::IWIStats> &stats,
                             double test_frac, std::uint64_t seed) {
    if (stats.size() < 10) {
        throw Error("TooFewSamples", "stratified split needs at least 10 clusters, got " +
                                         std::to_string(stats.size()));
    }
    if (!(test_frac > 0.0) || !(test_frac < 1.0)) {
        throw Error("BadConfig", "test fraction must be in (0, 1)");
    }
    std::vector<double> mu(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i) mu[i] = stats[i].mu;
    const std::vector<int> bins = groundtruth::discretize_equal_width(mu, kWealthBins);

    std::vector<std::vector<std::size_t>> members(kWealthBins);
    for (std::size_t i = 0; i < bins.size(); ++i) {
        members[static_cast<std::size_t>(bins[i])].push_back(i);
    }

    SplitResult out;
    Rng rng(seed);
    for (int b = 0; b < kWealthBins; ++b) {
        auto &m = members[static_cast<std::size_t>(b)];
        if (m.empty()) continue;
        if (m.size() == 1) {
            out.train.push_back(m[0]);
            out.warnings.push_back("wealth bin " + std::to_string(b) +
                                   " has a single member; kept in train");
            continue;
        }
        // floor rule keeps the per-bin test share within one item of target
        const auto k = static_cast<std::size_t>(
            std::floor(test_frac * static_cast<double>(m.size()) + 1e-9));
        rng.shuffle(m);
        for (std::size_t j = 0; j < m.size(); ++j) {
            (j < k ? out.test : out.train).push_back(m[j]);
        }
    }
    if (out.test.empty()) {
        throw Error("TooFewSamples",
                    "stratified split produced an empty test set; every wealth "
                    "bin is too small for test_frac " +
                        format_double(test_frac));
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

double ens_raw_weight(double beta, std::size_t bin_count) {
    if (bin_count == 0) throw Error("BadConfig", "ens weight of an empty bin");
    if (beta == 0.0) return 1.0;
    return (1.0 - beta) / (1.0 - std::pow(beta, static_cast<double>(bin_count)));
}

std::vector<double> ens_weights(const std::vector<double> &train_mu, const WeightConfig &cfg) {
    cfg.validate();
    if (train_mu.empty()) {
        throw Error("TooFewSamples", "weights need a non-empty training set");
    }
    std::vector<double> w(train_mu.size(), 1.0);
    if (cfg.scheme == WeightScheme::none) return w;

    const std::vector<int> bins = groundtruth::discretize_equal_width(train_mu, cfg.n_bins);
    std::vector<std::size_t> counts(static_cast<std::size_t>(cfg.n_bins), 0);
    for (int b : bins) counts[static_cast<std::size_t>(b)]++;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = ens_raw_weight(cfg.beta, counts[static_cast<std::size_t>(bins[i])]);
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    const double scale = static_cast<double>(w.size()) / total;
    for (double &x : w) x *= scale;
    return w;
}

std::vector<int> stratified_folds(const std::vector<double> &mu, int n_folds,
                                  std::uint64_t seed) {
    if (n_folds < 2) throw Error("BadConfig", "need at least 2 folds");
    if (mu.size() < static_cast<std::size_t>(n_folds)) {
        throw Error("TooFewSamples", "need at least one row per fold");
    }
    const std::vector<int> bins = groundtruth::discretize_equal_width(mu, kWealthBins);
    std::vector<std::vector<std::size_t>> members(kWealthBins);
    for (std::size_t i = 0; i < bins.size(); ++i) {
        members[static_cast<std::size_t>(bins[i])].push_back(i);
    }

    std::vector<int> folds(mu.size(), 0);
    Rng rng(seed);
    for (int b = 0; b < kWealthBins; ++b) {
        auto &m = members[static_cast<std::size_t>(b)];
        if (m.empty()) continue;
        rng.shuffle(m);
        // rotate the dealing start per bin so small bins do not pile onto fold 0
        for (std::size_t j = 0; j < m.size(); ++j) {
            folds[m[j]] = static_cast<int>((static_cast<std::size_t>(b) + j) %
                                           static_cast<std::size_t>(n_folds));
        }
    }

    // pathological bin shapes can still leave a fold empty; rebalance from the
    // largest fold, deterministically
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_folds), 0);
    for (int f : folds) counts[static_cast<std::size_t>(f)]++;
    for (int f = 0; f < n_folds; ++f) {
        while (counts[static_cast<std::size_t>(f)] == 0) {
            const auto donor = static_cast<int>(
                std::max_element(counts.begin(), counts.end()) - counts.begin());
            const auto row = static_cast<std::size_t>(
                std::find(folds.begin(), folds.end(), donor) - folds.begin());
            folds[row] = f;
            counts[static_cast<std::size_t>(donor)]--;
            counts[static_cast<std::size_t>(f)]++;
        }
    }
    return folds;
}

gbrt::Hyperparams sample_hyperparams(Rng &rng) {
    gbrt::Hyperparams hp;
    hp.n_trees = std::clamp(static_cast<int>(std::llround(rng.log_uniform(50.0, 500.0))),
                            50, 500);
    hp.max_depth = static_cast<int>(rng.uniform_int(3, 10));
    hp.learning_rate = rng.log_uniform(0.01, 0.3);
    hp.min_samples_leaf = static_cast<int>(rng.uniform_int(1, 20));
    hp.l2_leaf_reg = rng.uniform(0.0, 10.0);
    hp.subsample_rows = rng.uniform(0.6, 1.0);
    hp.subsample_cols = rng.uniform(0.6, 1.0);
    hp.random_seed = 0;
    return hp;
}

std::array<double, 2> target_scales(const gbrt::Dataset &d) {
    if (d.targets.empty()) throw Error("TooFewSamples", "target scales of an empty dataset");
    std::array<double, 2> scales{1.0, 1.0};
    const double n = static_cast<double>(d.targets.size());
    for (int t = 0; t < 2; ++t) {
        double sum = 0.0;
        for (const auto &y : d.targets) sum += y[static_cast<std::size_t>(t)];
        const double m = sum / n;
        double ss = 0.0;
        for (const auto &y : d.targets) {
            const double dlt = y[static_cast<std::size_t>(t)] - m;
            ss += dlt * dlt;
        }
        const double sd = std::sqrt(ss / n);
        scales[static_cast<std::size_t>(t)] = sd > 0.0 ? sd : 1.0;
    }
    return scales;
}

double weighted_standardized_mse(const gbrt::GBRTEnsemble &model, const gbrt::Dataset &subset,
                                 const std::array<double, 2> &scales) {
    if (subset.rows.empty()) throw Error("TooFewSamples", "loss of an empty subset");
    const auto preds = gbrt::predict(model, subset.columns, subset.rows);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double w = subset.weights.empty() ? 1.0 : subset.weights[i];
        const double e0 = (subset.targets[i][0] - preds[i][0]) / scales[0];
        const double e1 = (subset.targets[i][1] - preds[i][1]) / scales[1];
        num += w * 0.5 * (e0 * e0 + e1 * e1);
        den += w;
    }
    return num / den;
}

SearchResult random_search_cv(const gbrt::Dataset &train, const SearchSpec &spec) {
    spec.validate();
    const std::size_t n = train.rows.size();
    if (train.targets.size() != n) {
        throw Error("BadTrainingData", "row/target count mismatch");
    }
    if (n < 2 * static_cast<std::size_t>(spec.n_folds)) {
        throw Error("TooFewSamples", "cross validation needs at least 2 rows per fold");
    }

    std::vector<gbrt::Hyperparams> cands = spec.explicit_candidates;
    if (cands.empty()) {
        Rng rng(mix_seed(spec.seed, kStreamSearch));
        cands.reserve(static_cast<std::size_t>(spec.n_candidates));
        for (int c = 0; c < spec.n_candidates; ++c) cands.push_back(sample_hyperparams(rng));
    }

    std::vector<double> mu(n);
    for (std::size_t i = 0; i < n; ++i) mu[i] = train.targets[i][0];

    SearchResult res;
    res.folds = stratified_folds(mu, spec.n_folds, mix_seed(spec.seed, kStreamFolds));
    const std::array<double, 2> scales = target_scales(train);

    // fold datasets are candidate-independent, build them once
    const bool weighted = !train.weights.empty();
    std::vector<gbrt::Dataset> fit_part(static_cast<std::size_t>(spec.n_folds));
    std::vector<gbrt::Dataset> val_part(static_cast<std::size_t>(spec.n_folds));
    for (auto &d : fit_part) d.columns = train.columns;
    for (auto &d : val_part) d.columns = train.columns;
    for (std::size_t i = 0; i < n; ++i) {
        for (int f = 0; f < spec.n_folds; ++f) {
            gbrt::Dataset &dst =
                res.folds[i] == f ? val_part[static_cast<std::size_t>(f)]
                                  : fit_part[static_cast<std::size_t>(f)];
            dst.rows.push_back(train.rows[i]);
            dst.targets.push_back(train.targets[i]);
            if (weighted) dst.weights.push_back(train.weights[i]);
        }
    }

    for (std::size_t c = 0; c < cands.size(); ++c) {
        Candidate cand;
        cand.hp = cands[c];
        std::vector<double> losses;
        for (int f = 0; f < spec.n_folds && !cand.failed; ++f) {
            gbrt::Hyperparams hp = cand.hp;
            hp.random_seed = mix_seed(mix_seed(mix_seed(spec.seed, kStreamFit), c),
                                      static_cast<std::uint64_t>(f));
            try {
                const gbrt::GBRTEnsemble model =
                    gbrt::fit(fit_part[static_cast<std::size_t>(f)], hp);
                losses.push_back(weighted_standardized_mse(
                    model, val_part[static_cast<std::size_t>(f)], scales));
            } catch (const Error &e) {
                cand.failed = true;
                cand.failure = std::string(e.kind());
            }
        }
        if (!cand.failed) {
            cand.fold_losses = losses;
            cand.mean_loss = mean_of(losses);
            if (!std::isfinite(cand.mean_loss)) {
                cand.failed = true;
                cand.failure = "NonFiniteLoss";
                cand.fold_losses.clear();
                cand.mean_loss = std::numeric_limits<double>::quiet_NaN();
            }
        }
        res.table.push_back(std::move(cand));
    }

    const std::size_t npos = res.table.size();
    std::size_t best = npos;
    for (std::size_t c = 0; c < res.table.size(); ++c) {
        if (res.table[c].failed) continue;
        if (best == npos || res.table[c].mean_loss < res.table[best].mean_loss) best = c;
    }
    if (best == npos) throw Error("SearchFailed", "every candidate failed to fit");
    res.best_index = best;
    return res;
}

DataSelection select_by_recency(const std::vector<groundtruth::IWIStats> &stats,
                                const RecencyConfig &rc, double test_frac,
                                std::uint64_t seed) {
    std::set<int> years;
    for (const auto &s : stats) years.insert(s.year);
    if (years.empty()) throw Error("TooFewSamples", "no clusters to select from");

    DataSelection out;
    out.oldest_year = rc.oldest_year != 0 ? rc.oldest_year : *years.begin();
    out.newest_year = rc.newest_year != 0 ? rc.newest_year : *years.rbegin();
    if (years.count(out.oldest_year) == 0) {
        throw Error("BadConfig", "oldest year " + std::to_string(out.oldest_year) +
                                     " has no clusters");
    }
    if (years.count(out.newest_year) == 0) {
        throw Error("BadConfig", "newest year " + std::to_string(out.newest_year) +
                                     " has no clusters");
    }

    auto indices_where = [&](auto pred) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < stats.size(); ++i) {
            if (pred(stats[i])) idx.push_back(i);
        }
        return idx;
    };
    auto split_subset = [&](const std::vector<std::size_t> &idx) {
        std::vector<groundtruth::IWIStats> sub;
        sub.reserve(idx.size());
        for (std::size_t i : idx) sub.push_back(stats[i]);
        const SplitResult sr = stratified_split(sub, test_frac, seed);
        for (std::size_t k : sr.train) out.train.push_back(idx[k]);
        for (std::size_t k : sr.test) out.test.push_back(idx[k]);
        out.warnings = sr.warnings;
        std::sort(out.train.begin(), out.train.end());
        std::sort(out.test.begin(), out.test.end());
    };

    switch (rc.mode) {
    case RecencyMode::oo:
        split_subset(indices_where(
            [&](const groundtruth::IWIStats &s) { return s.year == out.oldest_year; }));
        break;
    case RecencyMode::nn:
        split_subset(indices_where(
            [&](const groundtruth::IWIStats &s) { return s.year == out.newest_year; }));
        break;
    case RecencyMode::on_combined:
        split_subset(indices_where([&](const groundtruth::IWIStats &s) {
            return s.year == out.oldest_year || s.year == out.newest_year;
        }));
        break;
    case RecencyMode::on_train_old_test_new: {
        if (out.oldest_year == out.newest_year) {
            throw Error("BadConfig", "O-N needs two distinct survey years");
        }
        out.train = indices_where(
            [&](const groundtruth::IWIStats &s) { return s.year == out.oldest_year; });
        out.test = indices_where(
            [&](const groundtruth::IWIStats &s) { return s.year == out.newest_year; });
        if (out.train.empty() || out.test.empty()) {
            throw Error("TooFewSamples", "O-N needs clusters in both years");
        }
        break;
    }
    }
    return out;
}

ModelingData build_modeling_data(const ingest::DatasetBundle &bundle,
                                 groundtruth::RelocationMode relocation,
                                 const features::FeatureConfig &fcfg) {
    const groundtruth::AssetMatrix assets =
        groundtruth::build_asset_matrix(bundle.households, bundle.assets);
    const groundtruth::WeightSpec wspec = groundtruth::compute_asset_weights(assets);
    const std::vector<double> scores = groundtruth::compute_iwi(assets, wspec);

    ModelingData md;
    md.stats = groundtruth::aggregate_clusters(assets.cluster_ids, scores, bundle.clusters,
                                               &md.warnings);
    const groundtruth::RelocationPlan plan =
        groundtruth::relocate(bundle.clusters, bundle.places, relocation);
    const std::vector<ingest::ClusterRow> relocated =
        groundtruth::apply_relocation(bundle.clusters, bundle.places, plan);
    md.matrix = features::assemble(features::cluster_locations(relocated), bundle, fcfg);
    features::standardize_per_year(md.matrix);

    for (std::size_t i = 0; i < md.stats.size(); ++i) {
        if (md.stats[i].cluster_id != md.matrix.location_ids[i]) {
            throw Error("InternalError", "stats and feature rows out of order");
        }
    }
    return md;
}

gbrt::Dataset make_dataset(const ModelingData &md, const std::vector<std::size_t> &idx,
                           const std::vector<double> &weights) {
    if (!weights.empty() && weights.size() != idx.size()) {
        throw Error("LengthMismatch", "weights must parallel the row selection");
    }
    gbrt::Dataset d;
    d.columns = md.matrix.columns;
    d.rows.reserve(idx.size());
    d.targets.reserve(idx.size());
    for (std::size_t i : idx) {
        d.rows.push_back(md.matrix.values.at(i));
        d.targets.push_back({md.stats.at(i).mu, md.stats.at(i).sigma});
    }
    d.weights = weights;
    return d;
}

TrainOutcome train_final(const ingest::DatasetBundle &bundle, const RecencyConfig &recency,
                         groundtruth::RelocationMode relocation, const WeightConfig &weights,
                         const SearchSpec &spec, const features::FeatureConfig &fcfg) {
    weights.validate();
    spec.validate();
    const ModelingData md = build_modeling_data(bundle, relocation, fcfg);

    TrainOutcome out;
    ModelCard &card = out.card;
    card.recency = std::string(to_string(recency.mode));
    card.relocation = std::string(groundtruth::to_string(relocation));
    card.weight_scheme = std::string(to_string(weights.scheme));
    card.beta = weights.beta;
    card.n_bins = weights.n_bins;
    card.n_candidates = spec.explicit_candidates.empty()
                            ? spec.n_candidates
                            : static_cast<int>(spec.explicit_candidates.size());
    card.n_folds = spec.n_folds;
    card.n_runs = spec.n_runs;
    card.seed = spec.seed;
    card.n_features = md.matrix.n_cols();
    card.warnings = md.warnings;

    evalreport::EvalMetrics acc;
    for (int r = 0; r < spec.n_runs; ++r) {
        const std::uint64_t run_seed = mix_seed(spec.seed, static_cast<std::uint64_t>(r));
        const DataSelection sel =
            select_by_recency(md.stats, recency, 0.2, mix_seed(run_seed, kStreamSplit));
        card.oldest_year = sel.oldest_year;
        card.newest_year = sel.newest_year;
        if (r == 0) {
            // bin composition is seed-independent, so selection warnings
            // repeat verbatim across runs; record them once
            card.warnings.insert(card.warnings.end(), sel.warnings.begin(),
                                 sel.warnings.end());
        }

        std::vector<double> train_mu;
        train_mu.reserve(sel.train.size());
        for (std::size_t i : sel.train) train_mu.push_back(md.stats[i].mu);
        const std::vector<double> w = ens_weights(train_mu, weights);
        gbrt::Dataset train_ds = make_dataset(md, sel.train, w);
        gbrt::Dataset test_ds = make_dataset(md, sel.test);

        SearchSpec run_spec = spec;
        run_spec.seed = run_seed;
        run_spec.n_runs = 1;
        const SearchResult sr = random_search_cv(train_ds, run_spec);

        gbrt::Hyperparams hp = sr.best();
        hp.random_seed = mix_seed(run_seed, kStreamRefit);
        gbrt::GBRTEnsemble model = gbrt::fit(train_ds, hp);

        RunRecord rr;
        rr.run_seed = run_seed;
        rr.chosen = hp;
        rr.fold_losses = sr.table[sr.best_index].fold_losses;
        rr.cv_loss = sr.table[sr.best_index].mean_loss;
        rr.test = evalreport::evaluate_model(model, test_ds);
        acc.eps_mu += rr.test.eps_mu;
        acc.eps_sigma += rr.test.eps_sigma;
        acc.rmse_mu += rr.test.rmse_mu;
        acc.rmse_sigma += rr.test.rmse_sigma;
        card.runs.push_back(rr);

        if (r == spec.n_runs - 1) {
            card.n_train = sel.train.size();
            card.n_test = sel.test.size();
            out.model = std::move(model);
            out.train_set = std::move(train_ds);
            out.test_set = std::move(test_ds);
            out.train_ids.reserve(sel.train.size());
            for (std::size_t i : sel.train) out.train_ids.push_back(md.stats[i].cluster_id);
            out.test_ids.reserve(sel.test.size());
            for (std::size_t i : sel.test) out.test_ids.push_back(md.stats[i].cluster_id);
        }
    }

    const double runs = static_cast<double>(spec.n_runs);
    card.mean_test.eps_mu = acc.eps_mu / runs;
    card.mean_test.eps_sigma = acc.eps_sigma / runs;
    card.mean_test.rmse_mu = acc.rmse_mu / runs;
    card.mean_test.rmse_sigma = acc.rmse_sigma / runs;
    card.mean_test.n_test = card.runs.back().test.n_test;
    return out;
}

nlohmann::json card_to_json(const ModelCard &card) {
    nlohmann::json j;
    j["format"] = "povmap-card";
    j["version"] = 1;
    j["fingerprint"] = {{"recency", card.recency},
                        {"oldest_year", card.oldest_year},
                        {"newest_year", card.newest_year},
                        {"relocation", card.relocation},
                        {"weight_scheme", card.weight_scheme},
                        {"beta", card.beta},
                        {"n_bins", card.n_bins}};
    j["search"] = {{"n_candidates", card.n_candidates},
                   {"n_folds", card.n_folds},
                   {"n_runs", card.n_runs},
                   {"seed", card.seed}};
    j["data"] = {{"n_train", card.n_train},
                 {"n_test", card.n_test},
                 {"n_features", card.n_features}};
    nlohmann::json runs = nlohmann::json::array();
    for (const RunRecord &r : card.runs) {
        nlohmann::json rj;
        rj["run_seed"] = r.run_seed;
        rj["hyperparams"] = hp_to_json(r.chosen);
        rj["fold_losses"] = r.fold_losses;
        rj["cv_loss"] = r.cv_loss;
        rj["test"] = eval_to_json(r.test);
        runs.push_back(std::move(rj));
    }
    j["runs"] = std::move(runs);
    j["mean_test"] = eval_to_json(card.mean_test);
    j["warnings"] = card.warnings;
    return j;
}

ModelCard card_from_json(const nlohmann::json &j) {
    try {
        if (j.at("format").get<std::string>() != "povmap-card" ||
            j.at("version").get<int>() != 1) {
            throw Error("BadCard", "not a model card document");
        }
        ModelCard card;
        const nlohmann::json &fp = j.at("fingerprint");
        card.recency = fp.at("recency").get<std::string>();
        card.oldest_year = fp.at("oldest_year").get<int>();
        card.newest_year = fp.at("newest_year").get<int>();
        card.relocation = fp.at("relocation").get<std::string>();
        card.weight_scheme = fp.at("weight_scheme").get<std::string>();
        card.beta = fp.at("beta").get<double>();
        card.n_bins = fp.at("n_bins").get<int>();
        const nlohmann::json &sp = j.at("search");
        card.n_candidates = sp.at("n_candidates").get<int>();
        card.n_folds = sp.at("n_folds").get<int>();
        card.n_runs = sp.at("n_runs").get<int>();
        card.seed = sp.at("seed").get<std::uint64_t>();
        const nlohmann::json &dt = j.at("data");
        card.n_train = dt.at("n_train").get<std::size_t>();
        card.n_test = dt.at("n_test").get<std::size_t>();
        card.n_features = dt.at("n_features").get<std::size_t>();
        for (const nlohmann::json &rj : j.at("runs")) {
            RunRecord r;
            r.run_seed = rj.at("run_seed").get<std::uint64_t>();
            r.chosen = hp_from_json(rj.at("hyperparams"));
            r.fold_losses = rj.at("fold_losses").get<std::vector<double>>();
            r.cv_loss = rj.at("cv_loss").get<double>();
            r.test = eval_from_json(rj.at("test"));
            card.runs.push_back(std::move(r));
        }
        card.mean_test = eval_from_json(j.at("mean_test"));
        card.warnings = j.at("warnings").get<std::vector<std::string>>();
        return card;
    } catch (const nlohmann::json::exception &e) {
        throw Error("BadCard", std::string("malformed model card: ") + e.what());
    }
}

void write_card(const std::filesystem::path &file, const ModelCard &card) {
    std::ofstream out(file);
    if (!out) throw Error("IoError", "cannot write " + file.string());
    out << card_to_json(card).dump(2) << "\n";
    if (!out) throw Error("IoError", "short write to " + file.string());
}

ModelCard read_card(const std::filesystem::path &file) {
    std::ifstream in(file);
    if (!in) throw Error("IoError", "cannot read " + file.string());
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::exception &e) {
        throw Error("BadCard", std::string("malformed model card: ") + e.what());
    }
    return card_from_json(j);
}

DataSelection selection_from_card(const std::vector<groundtruth::IWIStats> &stats,
                                  const ModelCard &card) {
    if (card.n_runs < 1)
        throw Error("BadCard", "card records a non-positive run count");
    RecencyConfig rc;
    rc.mode = recency_from_string(card.recency);
    rc.oldest_year = card.oldest_year;
    rc.newest_year = card.newest_year;
    const std::uint64_t run_seed =
        mix_seed(card.seed, static_cast<std::uint64_t>(card.n_runs - 1));
    return select_by_recency(stats, rc, 0.2, mix_seed(run_seed, kStreamSplit));
}

} // namespace povmap::pipeline
