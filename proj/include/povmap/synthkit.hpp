#pragma once

#include "povmap/ingest.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace povmap::synthkit {

/// How much physical detail each site carries. Sites are far enough apart
/// that one site's layers never leak into another's buffer radii.
struct LayerDensities {
    int households_per_cluster = 25;
    int nightlight_pixels_per_site = 5;
    int max_poi_count = 12;
    int max_cell_count = 10;

    void validate() const; // Error("BadConfig")

    bool operator==(const LayerDensities &) const = default;
};

/// Recipe for a synthetic country. The wealth model is
///   mu    = f(planted features) + gaussian(eta_mu)
///   sigma = g(mu) + bounded noise(eta_sigma), g a concave-linear mix,
/// with the noise vectors residualized against the signal so the recorded
/// noise levels are exact population quantities, not estimates.
struct SynthSpec {
    std::string country_code = "SY";
    std::size_t n_clusters = 1000;
    std::size_t n_places = 400;
    int n_years = 2;          // 1 or 2 survey years
    double urban_share = 0.35;

    double mu_noise = -1.0;       // eta_mu; negative derives it from mu_noise_ratio
    double mu_noise_ratio = 0.16; // target eta^2 / Var(mu), so 0.16 plants a 0.4 floor
    double sigma_noise = -1.0;    // eta_sigma; negative derives it from r_target
    double r_target = 0.675;      // planted corr(mu, sigma)

    // narrows the latent wealth range; a [0.3, 0.7] country sits strictly
    // inside a [0, 1] one, which is what transfer asymmetry needs
    double wealth_band_lo = 0.0;
    double wealth_band_hi = 1.0;

    bool with_embeddings = false;
    LayerDensities densities;
    std::uint64_t seed = 0;

    void validate() const; // Error("BadConfig")

    bool operator==(const SynthSpec &) const = default;
};

/// Everything needed to score the pipeline against the generative truth:
/// the wealth function (offset, per-column weights, g coefficients), the
/// realized noise levels, and the latent per-cluster targets before any
/// household sampling.
struct SynthRecord {
    SynthSpec spec;
    double eta_mu = 0.0;
    double eta_sigma = 0.0;
    std::array<double, 3> g_coeffs{};  // g(mu) = c0 + c1*mu + c2*sqrt(mu)
    double f_offset = 0.0;
    std::array<double, 6> f_weights{}; // parallel to planted_columns
    std::vector<std::string> planted_columns;
    std::vector<std::string> cluster_ids;
    std::vector<double> f_values;
    std::vector<double> mu_true;
    std::vector<double> sigma_true;
};

struct SynthResult {
    ingest::DatasetBundle bundle;
    SynthRecord record;
};

/// Builds the country. Deterministic in the spec seed; the bundle passes
/// validate_bundle and every planted signal is recoverable through the real
/// feature extractors. Throws Error("BadConfig") for unattainable noise
/// targets.
SynthResult generate(const SynthSpec &spec);

/// {optimal NRMSE_mu, optimal NRMSE_sigma}: sqrt(eta^2 / Var(target)) with
/// the variance taken over the generated cluster population.
std::array<double, 2> bayes_nrmse(const SynthRecord &record);

nlohmann::json record_to_json(const SynthRecord &r);
SynthRecord record_from_json(const nlohmann::json &j); // Error("BadRecord")
void write_record(const std::filesystem::path &file, const SynthRecord &r);
SynthRecord read_record(const std::filesystem::path &file);

} // namespace povmap::synthkit
