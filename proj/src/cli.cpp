#include "povmap/cli.hpp"

#include "povmap/common.hpp"
#include "povmap/csv.hpp"
#include "povmap/evalreport.hpp"
#include "povmap/features.hpp"
#include "povmap/gbrt.hpp"
#include "povmap/groundtruth.hpp"
#include "povmap/ingest.hpp"
#include "povmap/mapgen.hpp"
#include "povmap/pipeline.hpp"
#include "povmap/synthkit.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace povmap::cli {
namespace {

namespace fs = std::filesystem;

// every key a config file may carry; flag name with dashes turned into
// underscores. Unknown keys are typos and get rejected outright.
const std::set<std::string> &known_keys() {
    static const std::set<std::string> keys = {
        "manifest",   "target_manifest", "out",       "recency",
        "relocation", "weights",         "beta",      "bins",
        "profile",    "seed",            "model",     "card",
        "stamp",      "clusters",        "places",    "urban_share",
        "years",      "band_lo",         "band_hi",   "embeddings",
        "country",    "mu_noise_ratio",  "r_target",
    };
    return keys;
}

/// key = value per line; # starts a comment, blank lines are fine.
std::map<std::string, std::string> read_config(const fs::path &file) {
    std::ifstream in(file);
    if (!in) throw Error("UsageError", "cannot open config file " + file.string());
    std::map<std::string, std::string> out;
    std::string line;
    int line_no = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error("UsageError", file.string() + ":" +
                                          std::to_string(line_no) +
                                          ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!known_keys().count(key))
            throw Error("UsageError", file.string() + ":" +
                                          std::to_string(line_no) +
                                          ": unknown config key '" + key + "'");
        if (out.count(key))
            throw Error("UsageError", file.string() + ":" +
                                          std::to_string(line_no) +
                                          ": duplicate config key '" + key + "'");
        out[key] = value;
    }
    return out;
}

/// One subcommand's flag set; flags beat config keys, config keys beat
/// defaults.
struct Args {
    CLI::App *cmd = nullptr;
    std::string config_path;
    std::map<std::string, std::string> raw;
    std::map<std::string, CLI::Option *> opts;
    std::map<std::string, std::string> config;

    void add(const std::string &key, const std::string &help) {
        std::string flag = "--" + key;
        for (auto &ch : flag)
            if (ch == '_') ch = '-';
        opts[key] = cmd->add_option(flag, raw[key], help);
    }

    void add_flag(const std::string &key, const std::string &help) {
        opts[key] = cmd->add_flag("--" + key, help);
    }

    void load_config() {
        if (!config_path.empty()) config = read_config(config_path);
    }

    std::optional<std::string> get(const std::string &key) const {
        const auto o = opts.find(key);
        if (o != opts.end() && o->second->count() > 0) {
            if (o->second->get_expected_min() == 0) return "true"; // bare flag
            return raw.at(key);
        }
        const auto c = config.find(key);
        if (c != config.end()) return c->second;
        return std::nullopt;
    }

    std::string get_or(const std::string &key, const std::string &def) const {
        return get(key).value_or(def);
    }

    std::string require(const std::string &key) const {
        if (auto v = get(key)) return *v;
        throw Error("UsageError", "missing required setting '" + key +
                                      "' (flag or config key)");
    }
};

double num_of(const std::string &key, const std::string &s) {
    try {
        return parse_double(s);
    } catch (const Error &) {
        throw Error("UsageError", "setting '" + key + "': not a number: " + s);
    }
}

long long int_of(const std::string &key, const std::string &s) {
    try {
        return parse_int(s);
    } catch (const Error &) {
        throw Error("UsageError", "setting '" + key + "': not an integer: " + s);
    }
}

std::uint64_t seed_of(const std::string &s) {
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception &) {
        throw Error("UsageError", "setting 'seed': not an unsigned integer: " + s);
    }
}

bool bool_of(const std::string &key, const std::string &s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw Error("UsageError", "setting '" + key + "': expected true or false, got " + s);
}

template <typename F>
auto usage_wrap(const std::string &key, const std::string &value, F parse) {
    try {
        return parse(value);
    } catch (const Error &e) {
        throw Error("UsageError", "setting '" + key + "': " + e.what());
    }
}

ingest::DatasetBundle load_from_manifest(const fs::path &manifest) {
    if (!fs::exists(manifest))
        throw Error("UsageError", "manifest does not exist: " + manifest.string());
    fs::path root = manifest.parent_path();
    if (root.empty()) root = ".";
    return ingest::load_bundle(root, manifest.filename().string());
}

void write_text(const fs::path &file, const std::string &text) {
    std::ofstream out(file);
    if (!out) throw Error("IoError", "cannot open " + file.string() + " for writing");
    out << text;
    if (!text.empty() && text.back() != '\n') out << "\n";
    if (!out) throw Error("IoError", "failed writing " + file.string());
}

std::string slurp(const fs::path &file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Records which files a subcommand produced, keyed by subcommand so reruns
/// replace their own entry. No timestamps; the manifest must be byte-stable.
void note_artifacts(const fs::path &out, const std::string &command,
                    const std::vector<std::string> &files) {
    const fs::path mf = out / "run_manifest.json";
    nlohmann::json doc = nlohmann::json::object();
    if (fs::exists(mf)) {
        try {
            doc = nlohmann::json::parse(slurp(mf));
        } catch (const nlohmann::json::exception &e) {
            throw Error("BadRunManifest",
                        mf.string() + " is not valid JSON: " + e.what());
        }
    }
    if (!doc.contains("commands") || !doc["commands"].is_object())
        doc["commands"] = nlohmann::json::object();
    doc["commands"][command] = files;
    write_text(mf, doc.dump(2));
}

fs::path ensure_out(const Args &a) {
    const fs::path out = a.get_or("out", "povmap_out");
    fs::create_directories(out);
    return out;
}

int workers_from_env() {
    const char *w = std::getenv("POVMAP_WORKERS");
    if (!w) return 1;
    const std::string s = w;
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size() || v < 1) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception &) {
        throw Error("UsageError",
                    "POVMAP_WORKERS must be a positive integer, got '" + s + "'");
    }
}

RunConfig run_config_of(const Args &a) {
    RunConfig rc;
    rc.manifest = a.require("manifest");
    rc.out = a.get_or("out", "povmap_out");
    rc.seed = seed_of(a.get_or("seed", "0"));
    rc.profile = a.get_or("profile", "ci");
    rc.recency = usage_wrap("recency", a.get_or("recency", "ON"), [](const std::string &s) {
        return pipeline::recency_from_string(s);
    });
    rc.relocation = usage_wrap("relocation", a.get_or("relocation", "none"),
                               [](const std::string &s) {
                                   return groundtruth::relocation_mode_from_string(s);
                               });
    rc.weights = usage_wrap("weights", a.get_or("weights", "ens"), [](const std::string &s) {
        return pipeline::weight_scheme_from_string(s);
    });
    return rc;
}

pipeline::WeightConfig weight_config_of(const Args &a, const RunConfig &rc) {
    pipeline::WeightConfig wc;
    wc.scheme = rc.weights;
    wc.beta = num_of("beta", a.get_or("beta", "0.9"));
    wc.n_bins = int(int_of("bins", a.get_or("bins", "10")));
    return wc;
}

// ---------------------------------------------------------------- validate

void cmd_validate(const Args &a) {
    const auto out = ensure_out(a);
    const auto b = load_from_manifest(a.require("manifest"));
    const auto rep = ingest::validate_bundle(b);

    nlohmann::json j;
    j["country"] = b.country_code;
    j["layer_counts"] = rep.layer_counts;
    nlohmann::json per_year = nlohmann::json::object();
    for (const auto &[year, n] : rep.clusters_per_year)
        per_year[std::to_string(year)] = n;
    j["clusters_per_year"] = per_year;
    j["urban_clusters"] = rep.urban_clusters;
    j["rural_clusters"] = rep.rural_clusters;
    j["warnings"] = rep.warnings;
    write_text(out / "validation_report.json", j.dump(2));
    note_artifacts(out, "validate", {"validation_report.json"});

    std::cout << rep.to_string();
    std::cout << "wrote " << (out / "validation_report.json").string() << "\n";
}

// --------------------------------------------------------------------- iwi

void cmd_iwi(const Args &a) {
    const auto out = ensure_out(a);
    const auto b = load_from_manifest(a.require("manifest"));

    const auto m = groundtruth::build_asset_matrix(b.households, b.assets);
    const auto w = groundtruth::compute_asset_weights(m);
    const auto scores = groundtruth::compute_iwi(m, w);
    std::vector<std::string> warnings;
    const auto stats =
        groundtruth::aggregate_clusters(m.cluster_ids, scores, b.clusters, &warnings);

    csv::Table t;
    t.path = (out / "iwi_clusters.csv").string();
    t.header = {"cluster_id", "year", "settlement", "mu", "sigma", "n_households"};
    double mu_min = 1e300, mu_max = -1e300, mu_sum = 0;
    for (const auto &s : stats) {
        t.rows.push_back({s.cluster_id, std::to_string(s.year),
                          std::string(ingest::to_string(s.settlement)),
                          format_double(s.mu), format_double(s.sigma),
                          std::to_string(s.n_households)});
        mu_min = std::min(mu_min, s.mu);
        mu_max = std::max(mu_max, s.mu);
        mu_sum += s.mu;
    }
    csv::write_csv(out / "iwi_clusters.csv", t);
    write_text(out / "iwi_weights.json", groundtruth::weight_spec_to_json(w));
    note_artifacts(out, "iwi", {"iwi_clusters.csv", "iwi_weights.json"});

    std::cout << "scored " << b.households.size() << " households in "
              << stats.size() << " clusters\n"
              << "cluster mean wealth: min " << format_double(mu_min) << ", mean "
              << format_double(mu_sum / double(stats.size())) << ", max "
              << format_double(mu_max) << "\n";
    for (const auto &warning : warnings) std::cout << "warning: " << warning << "\n";
    std::cout << "wrote " << (out / "iwi_clusters.csv").string() << ", "
              << (out / "iwi_weights.json").string() << "\n";
}

// ---------------------------------------------------------------- relocate

void cmd_relocate(const Args &a) {
    const auto out = ensure_out(a);
    const auto b = load_from_manifest(a.require("manifest"));
    const auto mode = usage_wrap("relocation", a.require("relocation"),
                                 [](const std::string &s) {
                                     return groundtruth::relocation_mode_from_string(s);
                                 });

    const auto plan = groundtruth::relocate(b.clusters, b.places, mode);
    groundtruth::write_relocation_csv(plan, out / "relocation.csv");
    note_artifacts(out, "relocate", {"relocation.csv"});

    std::size_t moved = 0;
    double dist_sum = 0, dist_max = 0;
    for (const auto &as : plan.assignments)
        if (!as.keeps_noisy()) {
            ++moved;
            dist_sum += as.distance_km;
            dist_max = std::max(dist_max, as.distance_km);
        }
    std::cout << "mode " << groundtruth::to_string(mode) << ": moved " << moved
              << " of " << plan.assignments.size() << " clusters";
    if (moved > 0)
        std::cout << " (mean " << format_double(dist_sum / double(moved))
                  << " km, max " << format_double(dist_max) << " km)";
    std::cout << "\nwrote " << (out / "relocation.csv").string() << "\n";
}

// ---------------------------------------------------------------- features

void cmd_features(const Args &a) {
    const auto out = ensure_out(a);
    const auto b = load_from_manifest(a.require("manifest"));

    auto cm = features::assemble(features::cluster_locations(b.clusters), b, {});
    const auto fitted = features::standardize_per_year(cm);
    features::write_feature_csv(cm, out / "features_clusters.csv",
                                out / "features_clusters_columns.json");
    std::vector<std::string> artifacts = {"features_clusters.csv",
                                          "features_clusters_columns.json"};
    std::cout << "clusters: " << cm.n_rows() << " rows x " << cm.n_cols()
              << " columns\n";

    if (!b.places.empty()) {
        auto pm = features::assemble(features::place_locations(b), b, {});
        std::vector<std::string> warnings;
        features::apply_standardization(pm, fitted, &warnings);
        features::write_feature_csv(pm, out / "features_places.csv",
                                    out / "features_places_columns.json");
        artifacts.push_back("features_places.csv");
        artifacts.push_back("features_places_columns.json");
        std::cout << "places: " << pm.n_rows() << " rows x " << pm.n_cols()
                  << " columns\n";
        for (const auto &warning : warnings)
            std::cout << "warning: " << warning << "\n";
    }
    note_artifacts(out, "features", artifacts);
    std::cout << "wrote feature tables under " << out.string() << "\n";
}

// ------------------------------------------------------------------- train

void cmd_train(const Args &a) {
    const auto rc = run_config_of(a);
    fs::create_directories(rc.out);
    const auto b = load_from_manifest(rc.manifest);

    pipeline::RecencyConfig recency;
    recency.mode = rc.recency;
    const auto wc = weight_config_of(a, rc);
    const auto outcome =
        pipeline::train_final(b, recency, rc.relocation, wc, rc.search());

    write_text(rc.out / "model.json", gbrt::model_to_json(outcome.model));
    pipeline::write_card(rc.out / "model_card.json", outcome.card);

    std::vector<std::pair<std::string, evalreport::EvalMetrics>> rows;
    for (std::size_t r = 0; r < outcome.card.runs.size(); ++r)
        rows.emplace_back("run_" + std::to_string(r), outcome.card.runs[r].test);
    rows.emplace_back("mean", outcome.card.mean_test);
    csv::write_csv(rc.out / "training_metrics.csv", evalreport::metrics_csv(rows));

    csv::Table splits;
    splits.header = {"cluster_id", "role"};
    for (const auto &id : outcome.train_ids) splits.rows.push_back({id, "train"});
    for (const auto &id : outcome.test_ids) splits.rows.push_back({id, "test"});
    csv::write_csv(rc.out / "splits.csv", splits);

    note_artifacts(rc.out, "train",
                   {"model.json", "model_card.json", "training_metrics.csv",
                    "splits.csv"});

    std::cout << "trained on " << outcome.card.n_train << " clusters, tested on "
              << outcome.card.n_test << " (" << outcome.card.n_features
              << " features)\n"
              << "recency " << outcome.card.recency << ", relocation "
              << outcome.card.relocation << ", weights "
              << outcome.card.weight_scheme << ", profile " << rc.profile
              << ", seed " << rc.seed << "\n";
    for (std::size_t r = 0; r < outcome.card.runs.size(); ++r)
        std::cout << "run " << r << ": eps_mu "
                  << format_double(outcome.card.runs[r].test.eps_mu)
                  << ", eps_sigma "
                  << format_double(outcome.card.runs[r].test.eps_sigma) << "\n";
    std::cout << "mean: eps_mu " << format_double(outcome.card.mean_test.eps_mu)
              << ", eps_sigma "
              << format_double(outcome.card.mean_test.eps_sigma) << "\n";
    for (const auto &warning : outcome.card.warnings)
        std::cout << "warning: " << warning << "\n";
    std::cout << "wrote " << (rc.out / "model.json").string() << ", "
              << (rc.out / "model_card.json").string() << "\n";
}

// ---------------------------------------------------------------- evaluate

void cmd_evaluate(const Args &a) {
    const auto out = ensure_out(a);
    const auto b = load_from_manifest(a.require("manifest"));
    const fs::path card_path = a.get_or("card", (out / "model_card.json").string());
    const fs::path model_path = a.get_or("model", (out / "model.json").string());

    const auto card = pipeline::read_card(card_path);
    const auto model = gbrt::model_from_json(slurp(model_path));

    const auto relocation =
        groundtruth::relocation_mode_from_string(card.relocation);
    const auto md = pipeline::build_modeling_data(b, relocation);
    const auto sel = pipeline::selection_from_card(md.stats, card);
    const auto test = pipeline::make_dataset(md, sel.test);

    const auto metrics = evalreport::evaluate_model(model, test);
    const auto preds = gbrt::predict(model, test.columns, test.rows);

    std::vector<bool> urban;
    std::vector<double> mu_true, sigma_true, mu_pred, sigma_pred;
    for (std::size_t k = 0; k < sel.test.size(); ++k) {
        const auto &s = md.stats[sel.test[k]];
        urban.push_back(s.settlement == ingest::Settlement::urban);
        mu_true.push_back(s.mu);
        sigma_true.push_back(s.sigma);
        mu_pred.push_back(preds[k][0]);
        sigma_pred.push_back(preds[k][1]);
    }
    const auto itab = evalreport::intersection_table(urban, mu_true, mu_pred);
    const auto var =
        evalreport::variability(urban, mu_pred, sigma_pred, mu_true, sigma_true);

    write_text(out / "eval_metrics.json", evalreport::metrics_json(metrics).dump(2));
    csv::write_csv(out / "eval_intersection.csv", evalreport::intersection_csv(itab));
    csv::write_csv(out / "eval_variability.csv", evalreport::variability_csv(var));
    note_artifacts(out, "evaluate",
                   {"eval_metrics.json", "eval_intersection.csv",
                    "eval_variability.csv"});

    std::cout << "evaluated " << metrics.n_test << " held-out clusters: eps_mu "
              << format_double(metrics.eps_mu) << ", eps_sigma "
              << format_double(metrics.eps_sigma) << "\n";
    if (!card.runs.empty()) {
        const auto &carded = card.runs.back().test;
        if (carded == metrics)
            std::cout << "metrics match the card's final run\n";
        else
            std::cout << "warning: metrics differ from the card's final run "
                         "(the bundle has changed since training)\n";
    }
    std::cout << "wrote evaluation tables under " << out.string() << "\n";
}

// ------------------------------------------------------------------- infer

void cmd_infer(const Args &a) {
    const auto out = ensure_out(a);
    const auto b = load_from_manifest(a.require("manifest"));
    const fs::path model_path = a.get_or("model", (out / "model.json").string());
    const auto model = gbrt::model_from_json(slurp(model_path));

    auto map = mapgen::infer_places(model, b);
    map.timestamp = a.get_or("stamp", utc_now());

    mapgen::write_geojson(out / "map.geojson", map);
    csv::write_csv(out / "map.csv", mapgen::map_table(map));
    std::vector<std::string> artifacts = {"map.geojson", "map.csv"};
    if (!map.entries.empty()) {
        write_text(out / "map.svg", mapgen::render_scatter(map));
        artifacts.push_back("map.svg");
    }
    note_artifacts(out, "infer", artifacts);

    std::size_t n_urban = 0;
    double mu_min = 1e300, mu_max = -1e300;
    for (const auto &e : map.entries) {
        n_urban += e.settlement == ingest::Settlement::urban;
        mu_min = std::min(mu_min, e.mu);
        mu_max = std::max(mu_max, e.mu);
    }
    std::cout << "mapped " << map.entries.size() << " places (" << n_urban
              << " urban), model " << map.model_fingerprint << "\n";
    if (!map.entries.empty())
        std::cout << "predicted mean wealth spans [" << format_double(mu_min)
                  << ", " << format_double(mu_max) << "]\n";
    std::cout << "wrote " << (out / "map.geojson").string() << "\n";
}

// ---------------------------------------------------------------- transfer

void cmd_transfer(const Args &a) {
    const auto rc = run_config_of(a);
    fs::create_directories(rc.out);
    const fs::path target = a.require("target_manifest");

    const auto ba = load_from_manifest(rc.manifest);
    const auto bb = load_from_manifest(target);

    pipeline::RecencyConfig recency;
    recency.mode = rc.recency;
    const auto wc = weight_config_of(a, rc);
    const auto out_a =
        pipeline::train_final(ba, recency, rc.relocation, wc, rc.search());
    const auto out_b =
        pipeline::train_final(bb, recency, rc.relocation, wc, rc.search());

    const auto tm = evalreport::transfer(out_a.model, out_b.model,
                                         out_a.test_set, out_b.test_set);

    write_text(rc.out / "model_a.json", gbrt::model_to_json(out_a.model));
    write_text(rc.out / "model_b.json", gbrt::model_to_json(out_b.model));
    pipeline::write_card(rc.out / "card_a.json", out_a.card);
    pipeline::write_card(rc.out / "card_b.json", out_b.card);
    csv::write_csv(rc.out / "transfer.csv",
                   evalreport::transfer_csv(tm, ba.country_code, bb.country_code));
    write_text(rc.out / "transfer.json",
               evalreport::transfer_json(tm, ba.country_code, bb.country_code)
                   .dump(2));
    note_artifacts(rc.out, "transfer",
                   {"model_a.json", "model_b.json", "card_a.json", "card_b.json",
                    "transfer.csv", "transfer.json"});

    const auto cell = [&](std::size_t i, std::size_t j) {
        return format_double(tm.cells[i][j].eps_mu);
    };
    std::cout << "transfer eps_mu (model x data):\n"
              << "  " << ba.country_code << " on " << ba.country_code << ": "
              << cell(0, 0) << ",  " << ba.country_code << " on "
              << bb.country_code << ": " << cell(0, 1) << "\n"
              << "  " << bb.country_code << " on " << ba.country_code << ": "
              << cell(1, 0) << ",  " << bb.country_code << " on "
              << bb.country_code << ": " << cell(1, 1) << "\n"
              << "wrote " << (rc.out / "transfer.csv").string() << "\n";
}

// ------------------------------------------------------------------- synth

void cmd_synth(const Args &a) {
    const auto out = ensure_out(a);

    synthkit::SynthSpec spec;
    spec.seed = seed_of(a.get_or("seed", "0"));
    spec.country_code = a.get_or("country", spec.country_code);
    if (auto v = a.get("clusters"))
        spec.n_clusters = std::size_t(int_of("clusters", *v));
    if (auto v = a.get("places")) spec.n_places = std::size_t(int_of("places", *v));
    if (auto v = a.get("urban_share")) spec.urban_share = num_of("urban_share", *v);
    if (auto v = a.get("years")) spec.n_years = int(int_of("years", *v));
    if (auto v = a.get("band_lo")) spec.wealth_band_lo = num_of("band_lo", *v);
    if (auto v = a.get("band_hi")) spec.wealth_band_hi = num_of("band_hi", *v);
    if (auto v = a.get("mu_noise_ratio"))
        spec.mu_noise_ratio = num_of("mu_noise_ratio", *v);
    if (auto v = a.get("r_target")) spec.r_target = num_of("r_target", *v);
    if (auto v = a.get("embeddings"))
        spec.with_embeddings = bool_of("embeddings", *v);

    const auto r = synthkit::generate(spec);
    const auto floors = synthkit::bayes_nrmse(r.record);

    fs::create_directories(out / "bundle");
    ingest::write_bundle(r.bundle, out / "bundle");
    synthkit::write_record(out / "synth_record.json", r.record);
    note_artifacts(out, "synth", {"bundle/manifest.json", "synth_record.json"});

    std::cout << "generated country " << spec.country_code << ": "
              << spec.n_clusters << " clusters, " << spec.n_places
              << " places, " << spec.n_years
              << (spec.n_years == 1 ? " year" : " years")
              << (spec.with_embeddings ? ", embeddings" : "") << "\n"
              << "optimal error floor: eps_mu " << format_double(floors[0])
              << ", eps_sigma " << format_double(floors[1]) << "\n"
              << "wrote " << (out / "bundle" / "manifest.json").string() << ", "
              << (out / "synth_record.json").string() << "\n";
}

// ------------------------------------------------------------------ report

std::string metric_cell(double v) { return format_double(v); }

void cmd_report(const Args &a) {
    const auto out = ensure_out(a);
    const fs::path mf = out / "run_manifest.json";
    if (!fs::exists(mf))
        throw Error("UsageError", "no run_manifest.json under " + out.string() +
                                      "; run a subcommand there first");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(slurp(mf));
    } catch (const nlohmann::json::exception &e) {
        throw Error("BadRunManifest", mf.string() + " is not valid JSON: " + e.what());
    }

    std::ostringstream md;
    md << "# Run report\n";
    std::vector<std::string> produced;

    if (fs::exists(out / "model_card.json")) {
        const auto card = pipeline::read_card(out / "model_card.json");
        md << "\n## Model\n\n"
           << "- recency " << card.recency << ", relocation " << card.relocation
           << ", weights " << card.weight_scheme << " (beta "
           << format_double(card.beta) << ", " << card.n_bins << " bins)\n"
           << "- search: " << card.n_candidates << " candidates x "
           << card.n_folds << " folds x " << card.n_runs << " runs, seed "
           << card.seed << "\n"
           << "- data: " << card.n_train << " train / " << card.n_test
           << " test clusters, " << card.n_features << " features, years "
           << card.oldest_year << ".." << card.newest_year << "\n";
        if (!card.warnings.empty()) {
            md << "- warnings:\n";
            for (const auto &warning : card.warnings)
                md << "  - " << warning << "\n";
        }
        md << "\n| run | eps_mu | eps_sigma | rmse_mu | rmse_sigma | n_test |\n"
           << "|-----|--------|-----------|---------|------------|--------|\n";
        std::vector<std::pair<std::string, evalreport::EvalMetrics>> rows;
        for (std::size_t r = 0; r < card.runs.size(); ++r)
            rows.emplace_back(std::to_string(r), card.runs[r].test);
        rows.emplace_back("mean", card.mean_test);
        for (const auto &[name, m] : rows)
            md << "| " << name << " | " << metric_cell(m.eps_mu) << " | "
               << metric_cell(m.eps_sigma) << " | " << metric_cell(m.rmse_mu)
               << " | " << metric_cell(m.rmse_sigma) << " | " << m.n_test
               << " |\n";

        csv::write_csv(out / "card_metrics.csv", evalreport::metrics_csv(rows));
        produced.push_back("card_metrics.csv");
    }

    if (fs::exists(out / "map.geojson")) {
        const auto map = mapgen::read_geojson(out / "map.geojson");
        std::size_t n_urban = 0;
        for (const auto &e : map.entries)
            n_urban += e.settlement == ingest::Settlement::urban;
        md << "\n## Map\n\n"
           << "- " << map.entries.size() << " places (" << n_urban
           << " urban), model " << map.model_fingerprint << "\n";
        csv::write_csv(out / "map.csv", mapgen::map_table(map));
        produced.push_back("map.csv");
        if (!map.entries.empty()) {
            write_text(out / "map.svg", mapgen::render_scatter(map));
            produced.push_back("map.svg");
        }
    }

    if (fs::exists(out / "transfer.json")) {
        nlohmann::json tj;
        try {
            tj = nlohmann::json::parse(slurp(out / "transfer.json"));
        } catch (const nlohmann::json::exception &e) {
            throw Error("BadRunManifest",
                        (out / "transfer.json").string() +
                            " is not valid JSON: " + e.what());
        }
        md << "\n## Transfer\n\n```\n" << tj.dump(2) << "\n```\n";
    }

    md << "\n## Artifacts\n\n";
    if (doc.contains("commands"))
        for (const auto &[command, files] : doc["commands"].items())
            for (const auto &f : files)
                md << "- " << f.get<std::string>() << " (" << command << ")\n";

    write_text(out / "report.md", md.str());
    produced.push_back("report.md");
    note_artifacts(out, "report", produced);

    std::cout << "report over " << out.string() << ": wrote report.md";
    for (const auto &p : produced)
        if (p != "report.md") std::cout << ", " << p;
    std::cout << "\n";
}

} // namespace

pipeline::SearchSpec RunConfig::search() const {
    if (profile == "ci") return pipeline::SearchSpec::ci_profile(seed);
    if (profile == "full") return pipeline::SearchSpec::full_profile(seed);
    throw Error("UsageError", "profile must be ci or full, got '" + profile + "'");
}

int run_cli(int argc, char **argv) {
    CLI::App app{"poverty map modeling pipeline"};
    app.require_subcommand(1);

    std::map<std::string, Args> args;
    auto sub = [&](const std::string &name, const std::string &desc) -> Args & {
        Args &a = args[name];
        a.cmd = app.add_subcommand(name, desc);
        a.cmd->add_option("--config", a.config_path,
                          "key = value file; flags override its keys");
        return a;
    };

    {
        auto &a = sub("validate", "load a data bundle and report its shape");
        a.add("manifest", "bundle manifest file");
        a.add("out", "output directory");
    }
    {
        auto &a = sub("iwi", "score households and aggregate cluster wealth");
        a.add("manifest", "bundle manifest file");
        a.add("out", "output directory");
    }
    {
        auto &a = sub("relocate", "plan privacy-noise reversal for clusters");
        a.add("manifest", "bundle manifest file");
        a.add("out", "output directory");
        a.add("relocation", "none, rc or ruc");
    }
    {
        auto &a = sub("features", "assemble feature tables for clusters and places");
        a.add("manifest", "bundle manifest file");
        a.add("out", "output directory");
    }
    {
        auto &a = sub("train", "run the full training protocol");
        a.add("manifest", "bundle manifest file");
        a.add("out", "output directory");
        a.add("recency", "OO, NN, O-N or ON");
        a.add("relocation", "none, rc or ruc");
        a.add("weights", "none or ens");
        a.add("beta", "ens weighting beta");
        a.add("bins", "ens weighting bin count");
        a.add("profile", "search budget: ci or full");
        a.add("seed", "master seed");
    }
    {
        auto &a = sub("evaluate", "score a saved model on its held-out clusters");
        a.add("manifest", "bundle manifest file");
        a.add("out", "output directory");
        a.add("model", "model file (default <out>/model.json)");
        a.add("card", "model card file (default <out>/model_card.json)");
    }
    {
        auto &a = sub("infer", "predict wealth for every populated place");
        a.add("manifest", "bundle manifest file");
        a.add("out", "output directory");
        a.add("model", "model file (default <out>/model.json)");
        a.add("stamp", "timestamp written into the map metadata");
    }
    {
        auto &a = sub("transfer", "train on two countries and cross-apply");
        a.add("manifest", "source bundle manifest file");
        a.add("target_manifest", "target bundle manifest file");
        a.add("out", "output directory");
        a.add("recency", "OO, NN, O-N or ON");
        a.add("relocation", "none, rc or ruc");
        a.add("weights", "none or ens");
        a.add("beta", "ens weighting beta");
        a.add("bins", "ens weighting bin count");
        a.add("profile", "search budget: ci or full");
        a.add("seed", "master seed");
    }
    {
        auto &a = sub("synth", "generate a synthetic country bundle");
        a.add("out", "output directory");
        a.add("seed", "generator seed");
        a.add("country", "country code");
        a.add("clusters", "number of survey clusters");
        a.add("places", "number of populated places");
        a.add("urban_share", "urban fraction in [0, 1]");
        a.add("years", "survey years: 1 or 2");
        a.add("band_lo", "wealth band lower edge in [0, 1)");
        a.add("band_hi", "wealth band upper edge in (0, 1]");
        a.add("mu_noise_ratio", "noise share of mean-wealth variance");
        a.add("r_target", "target mean-spread correlation");
        a.add_flag("embeddings", "attach image-embedding vectors");
    }
    {
        auto &a = sub("report", "regenerate tables from persisted artifacts");
        a.add("out", "output directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e);
    }

    try {
        workers_from_env(); // validated; current modules are single-threaded

        for (auto &[name, a] : args) {
            if (!a.cmd->parsed()) continue;
            a.load_config();
            if (name == "validate") cmd_validate(a);
            else if (name == "iwi") cmd_iwi(a);
            else if (name == "relocate") cmd_relocate(a);
            else if (name == "features") cmd_features(a);
            else if (name == "train") cmd_train(a);
            else if (name == "evaluate") cmd_evaluate(a);
            else if (name == "infer") cmd_infer(a);
            else if (name == "transfer") cmd_transfer(a);
            else if (name == "synth") cmd_synth(a);
            else if (name == "report") cmd_report(a);
            return 0;
        }
        throw Error("UsageError", "no subcommand selected");
    } catch (const Error &e) {
        std::cerr << "povmap: error: " << e.what() << "\n";
        return e.kind() == "UsageError" ? 2 : 1;
    } catch (const std::exception &e) {
        std::cerr << "povmap: error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace povmap::cli
