#include "povmap/synthkit.hpp"

#include "povmap/common.hpp"
#include "povmap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace povmap::synthkit {
namespace {

// seed streams, disjoint from the training pipeline's
constexpr std::uint64_t kStreamGrid = 21;
constexpr std::uint64_t kStreamSettlement = 22;
constexpr std::uint64_t kStreamYears = 23;
constexpr std::uint64_t kStreamLatents = 24;
constexpr std::uint64_t kStreamNoiseMu = 25;
constexpr std::uint64_t kStreamNoiseSigma = 26;
constexpr std::uint64_t kStreamHouseholds = 27;
constexpr std::uint64_t kStreamAssets = 28;
constexpr std::uint64_t kStreamEmbeddings = 29;

// grid geometry: ~27 km between site centers, more than twice the widest
// relocation radius and buffer radius, so layer stacks never overlap
constexpr double kBaseLat = 2.0;
constexpr double kBaseLon = 10.0;
constexpr double kGridStepDeg = 0.25;
constexpr double kJitterDeg = 0.02;

// wealth function f = offset + sum_k w_k * h_k(u_k), one term per source
constexpr double kFOffset = 5.0;
constexpr std::array<double, 6> kFWeights = {22.0, 7.0, 16.0, 11.0, 4.0, 30.0};
constexpr std::array<double, 3> kGCoeffs = {10.0, 0.10, 0.50};

// physical ranges the unit latents map onto
constexpr double kPopBase = 100.0, kPopSpan = 50.0;   // 100..5000, log scale
constexpr double kMobBase = 20.0, kMobSpan = 100.0;   // 20..2000, log scale
constexpr double kDemoScale = 100.0;
constexpr double kNightScale = 40.0;

// asset quantization: logistic((h - theta)/tau) sliced into ordinal levels.
// Mostly multi-level assets with transition points tiling well past the
// wealth range on both sides: that keeps the score-versus-wealth mapping
// close to linear, so cluster means and spreads survive quantization
// (binary assets with mid-range cutoffs compress the tails badly enough to
// flip the sign of the mean-spread correlation).
constexpr double kAssetTau = 14.0;
constexpr double kAssetJitterSd = 3.0;

struct AssetDef {
    const char *name;
    int levels;
    double theta;
};

constexpr std::array<AssetDef, 10> kAssetDefs = {{
    {"water_source", 4, -17.0},
    {"toilet_type", 4, 23.0},
    {"floor_material", 4, 53.0},
    {"roof_material", 4, 83.0},
    {"cooking_fuel", 4, 118.0},
    {"sleeping_rooms", 6, 38.0},
    {"wall_material", 6, 68.0},
    {"vehicle_type", 5, 3.0},
    {"appliance_count", 5, 53.0},
    {"lighting_source", 5, 103.0},
}};

const std::array<const char *, 24> kPoiCategories = {
    "school",        "market",     "hospital",   "pharmacy",
    "bank",          "fuel_station", "police",   "worship",
    "restaurant",    "hotel",      "library",    "clinic",
    "post_office",   "bus_station", "water_point", "playground",
    "stadium",       "courthouse", "cinema",     "supermarket",
    "bakery",        "car_repair", "community_centre", "kindergarten"};

std::vector<std::string> demo_column_names() {
    std::vector<std::string> cols;
    cols.reserve(37);
    for (int j = 0; j < 37; ++j) cols.push_back("aud_q" + zero_pad(j, 2));
    return cols;
}

double vec_mean(const std::vector<double> &v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double pop_var(const std::vector<double> &v) {
    const double m = vec_mean(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / double(v.size());
}

double pop_cov(const std::vector<double> &a, const std::vector<double> &b) {
    const double ma = vec_mean(a), mb = vec_mean(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - ma) * (b[i] - mb);
    return acc / double(a.size());
}

double dot(const std::vector<double> &a, const std::vector<double> &b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

void center(std::vector<double> &v) {
    const double m = vec_mean(v);
    for (double &x : v) x -= m;
}

/// Center the raw draws, project out the signal directions, rescale to
/// population std exactly 1. Makes every recorded noise level an exact
/// population quantity instead of a sampling estimate.
std::vector<double> shape_noise(std::vector<double> v,
                                std::vector<std::vector<double>> basis) {
    center(v);
    for (std::size_t i = 0; i < basis.size(); ++i) {
        center(basis[i]);
        for (std::size_t j = 0; j < i; ++j) {
            const double denom = dot(basis[j], basis[j]);
            if (denom < 1e-12) continue;
            const double c = dot(basis[i], basis[j]) / denom;
            for (std::size_t k = 0; k < basis[i].size(); ++k)
                basis[i][k] -= c * basis[j][k];
        }
    }
    for (const auto &b : basis) {
        const double denom = dot(b, b);
        if (denom < 1e-12) continue;
        const double c = dot(v, b) / denom;
        for (std::size_t k = 0; k < v.size(); ++k) v[k] -= c * b[k];
    }
    const double sd = std::sqrt(dot(v, v) / double(v.size()));
    if (sd < 1e-12)
        throw Error("BadConfig",
                    "noise draws collapsed after removing the signal "
                    "directions; use more clusters");
    for (double &x : v) x /= sd;
    return v;
}

double g_of(double mu) {
    return kGCoeffs[0] + kGCoeffs[1] * mu +
           kGCoeffs[2] * std::sqrt(std::max(mu, 0.0));
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct SiteVals {
    geo::GeoPoint pt;
    bool urban = false;
    double z_pop = 0.0;
    double z_mob = 0.0;
    double z_demo = 0.0;
    double z_night = 0.0;
    long z_poi = 0;
    long z_cell = 0;
    double f = 0.0;
};

std::vector<char> urban_flags(Rng &rng, std::size_t n, double share) {
    std::vector<char> flags(n, 0);
    const auto n_urban =
        std::min<std::size_t>(n, std::size_t(std::llround(share * double(n))));
    std::fill(flags.begin(), flags.begin() + std::ptrdiff_t(n_urban), 1);
    rng.shuffle(flags);
    return flags;
}

} // namespace

void LayerDensities::validate() const {
    if (households_per_cluster < 2)
        throw Error("BadConfig", "households_per_cluster must be >= 2");
    if (nightlight_pixels_per_site < 1)
        throw Error("BadConfig", "nightlight_pixels_per_site must be >= 1");
    if (max_poi_count < 1) throw Error("BadConfig", "max_poi_count must be >= 1");
    if (max_cell_count < 1)
        throw Error("BadConfig", "max_cell_count must be >= 1");
}

void SynthSpec::validate() const {
    if (country_code.empty()) throw Error("BadConfig", "country_code is empty");
    if (n_clusters < 10)
        throw Error("BadConfig", "need at least 10 clusters, got " +
                                     std::to_string(n_clusters));
    if (n_years != 1 && n_years != 2)
        throw Error("BadConfig", "n_years must be 1 or 2, got " +
                                     std::to_string(n_years));
    if (!(urban_share >= 0.0 && urban_share <= 1.0))
        throw Error("BadConfig", "urban_share must lie in [0, 1], got " +
                                     format_double(urban_share));
    if (!(mu_noise_ratio >= 0.0 && mu_noise_ratio < 1.0))
        throw Error("BadConfig", "mu_noise_ratio must lie in [0, 1), got " +
                                     format_double(mu_noise_ratio));
    if (!(r_target > 0.0 && r_target < 1.0))
        throw Error("BadConfig", "r_target must lie in (0, 1), got " +
                                     format_double(r_target));
    if (!(wealth_band_lo >= 0.0 && wealth_band_lo < wealth_band_hi &&
          wealth_band_hi <= 1.0))
        throw Error("BadConfig",
                    "wealth band must satisfy 0 <= lo < hi <= 1, got [" +
                        format_double(wealth_band_lo) + ", " +
                        format_double(wealth_band_hi) + "]");
    densities.validate();
}

SynthResult generate(const SynthSpec &spec) {
    spec.validate();
    const auto &dens = spec.densities;
    const std::size_t n_clusters = spec.n_clusters;
    const std::size_t n_total = n_clusters + spec.n_places;
    const std::size_t grid_dim =
        std::size_t(std::ceil(std::sqrt(double(n_total))));

    // scatter sites over a shuffled sparse grid, one cell each
    std::vector<std::size_t> cells(grid_dim * grid_dim);
    std::iota(cells.begin(), cells.end(), std::size_t(0));
    Rng grid_rng(mix_seed(spec.seed, kStreamGrid));
    grid_rng.shuffle(cells);

    std::vector<SiteVals> sites(n_total);
    for (std::size_t i = 0; i < n_total; ++i) {
        const std::size_t cell = cells[i];
        const double lat = kBaseLat + double(cell / grid_dim) * kGridStepDeg +
                           grid_rng.uniform(-kJitterDeg, kJitterDeg);
        const double lon = kBaseLon + double(cell % grid_dim) * kGridStepDeg +
                           grid_rng.uniform(-kJitterDeg, kJitterDeg);
        sites[i].pt = {lat, lon};
    }

    Rng settle_rng(mix_seed(spec.seed, kStreamSettlement));
    const auto cluster_urban = urban_flags(settle_rng, n_clusters, spec.urban_share);
    const auto place_urban = urban_flags(settle_rng, spec.n_places, spec.urban_share);
    for (std::size_t i = 0; i < n_total; ++i)
        sites[i].urban = i < n_clusters ? cluster_urban[i] != 0
                                        : place_urban[i - n_clusters] != 0;

    const std::vector<int> year_pool =
        spec.n_years == 2 ? std::vector<int>{2016, 2019} : std::vector<int>{2019};
    std::vector<int> cluster_year(n_clusters);
    for (std::size_t i = 0; i < n_clusters; ++i)
        cluster_year[i] = year_pool[i % year_pool.size()];
    Rng year_rng(mix_seed(spec.seed, kStreamYears));
    year_rng.shuffle(cluster_year);

    // per-site latents in a fixed order: pop, mob, demo, poi, cell, night.
    // urban sites get shifted upward, rural downward, so settlement carries
    // a real wealth gap on top of the six physical signals.
    Rng latent_rng(mix_seed(spec.seed, kStreamLatents));
    for (auto &s : sites) {
        std::array<double, 6> t{};
        for (double &tk : t) {
            tk = spec.wealth_band_lo +
                 (spec.wealth_band_hi - spec.wealth_band_lo) *
                     latent_rng.next_double();
            tk = s.urban ? 0.25 + 0.75 * tk : 0.85 * tk;
        }
        s.z_pop = kPopBase * std::pow(kPopSpan, t[0]);
        s.z_mob = kMobBase * std::pow(kMobSpan, t[1]);
        s.z_demo = kDemoScale * t[2];
        s.z_poi = std::llround(t[3] * dens.max_poi_count);
        s.z_cell = std::llround(t[4] * dens.max_cell_count);
        s.z_night = kNightScale * t[5];

        // recompute the unit values from the stored physical ones so f is
        // exactly a function of what the extractors will read back
        const double u_pop = std::log(s.z_pop / kPopBase) / std::log(kPopSpan);
        const double u_mob = std::log(s.z_mob / kMobBase) / std::log(kMobSpan);
        const double u_demo = s.z_demo / kDemoScale;
        const double u_poi = double(s.z_poi) / dens.max_poi_count;
        const double u_cell = double(s.z_cell) / dens.max_cell_count;
        const double u_night = s.z_night / kNightScale;
        s.f = kFOffset + kFWeights[0] * u_pop + kFWeights[1] * u_mob +
              kFWeights[2] * u_demo * u_demo + kFWeights[3] * u_poi +
              kFWeights[4] * u_cell + kFWeights[5] * std::sqrt(u_night);
    }

    // latent cluster targets
    std::vector<double> f_values(n_clusters);
    for (std::size_t i = 0; i < n_clusters; ++i) f_values[i] = sites[i].f;
    const double var_f = pop_var(f_values);

    double eta_mu;
    if (spec.mu_noise >= 0.0) {
        eta_mu = spec.mu_noise;
    } else if (spec.mu_noise_ratio == 0.0) {
        eta_mu = 0.0;
    } else {
        eta_mu =
            std::sqrt(spec.mu_noise_ratio / (1.0 - spec.mu_noise_ratio) * var_f);
    }

    std::vector<double> mu = f_values;
    if (eta_mu > 0.0) {
        Rng noise_rng(mix_seed(spec.seed, kStreamNoiseMu));
        std::vector<double> draws(n_clusters);
        for (double &d : draws) d = noise_rng.next_normal();
        const auto e = shape_noise(std::move(draws), {f_values});
        for (std::size_t i = 0; i < n_clusters; ++i) mu[i] += eta_mu * e[i];
    }

    std::vector<double> g_vals(n_clusters);
    for (std::size_t i = 0; i < n_clusters; ++i) g_vals[i] = g_of(mu[i]);

    double eta_sigma;
    if (spec.sigma_noise >= 0.0) {
        eta_sigma = spec.sigma_noise;
    } else {
        // pick the noise level that lands corr(mu, sigma) on r_target:
        // with noise orthogonal to mu and g, corr = cov(mu,g) /
        // (std_mu * sqrt(var_g + eta^2))
        const double cov_mg = pop_cov(mu, g_vals);
        const double var_g = pop_var(g_vals);
        const double std_mu = std::sqrt(pop_var(mu));
        if (!(cov_mg > 0.0) || !(std_mu > 0.0))
            throw Error("BadConfig", "degenerate wealth targets; cannot "
                                     "calibrate sigma noise");
        const double want = cov_mg / (std_mu * spec.r_target);
        const double eta2 = want * want - var_g;
        if (eta2 < -1e-9)
            throw Error("BadConfig",
                        "r_target " + format_double(spec.r_target) +
                            " exceeds the correlation the sigma model can "
                            "reach; raise it or set sigma_noise explicitly");
        eta_sigma = std::sqrt(std::max(eta2, 0.0));
    }

    std::vector<double> sigma = g_vals;
    if (eta_sigma > 0.0) {
        Rng noise_rng(mix_seed(spec.seed, kStreamNoiseSigma));
        std::vector<double> draws(n_clusters);
        const double lim = std::sqrt(3.0);
        for (double &d : draws) d = noise_rng.uniform(-lim, lim);
        const auto e = shape_noise(std::move(draws), {mu, g_vals});
        for (std::size_t i = 0; i < n_clusters; ++i)
            sigma[i] += eta_sigma * e[i];
    }
    for (double s : sigma)
        if (!(s > 0.0))
            throw Error("BadConfig",
                        "sigma construction produced a non-positive cluster "
                        "spread; lower sigma_noise or widen the wealth band");

    // assemble the bundle
    ingest::DatasetBundle b;
    b.country_code = spec.country_code;
    for (const auto &a : kAssetDefs) b.assets.push_back({a.name, a.levels});
    for (const char *c : kPoiCategories) b.poi_categories.emplace_back(c);
    b.demographic_columns = demo_column_names();
    for (int y : year_pool) b.years.insert(y);

    b.clusters.reserve(n_clusters);
    for (std::size_t i = 0; i < n_clusters; ++i)
        b.clusters.push_back({"sc" + zero_pad(int(i), 4), sites[i].pt,
                              cluster_year[i],
                              sites[i].urban ? ingest::Settlement::urban
                                             : ingest::Settlement::rural});

    b.places.reserve(spec.n_places);
    std::size_t urban_seen = 0, rural_seen = 0;
    for (std::size_t p = 0; p < spec.n_places; ++p) {
        const auto &s = sites[n_clusters + p];
        ingest::PlaceKind kind;
        if (s.urban) {
            const std::array<ingest::PlaceKind, 3> kinds = {
                ingest::PlaceKind::city, ingest::PlaceKind::town,
                ingest::PlaceKind::neighborhood};
            kind = kinds[urban_seen++ % 3];
        } else {
            const std::array<ingest::PlaceKind, 3> kinds = {
                ingest::PlaceKind::village, ingest::PlaceKind::hamlet,
                ingest::PlaceKind::isolated_dwelling};
            kind = kinds[rural_seen++ % 3];
        }
        b.places.push_back({"sp" + zero_pad(int(p), 4), s.pt, kind});
    }

    // households realize (mu, sigma) exactly: the within-cluster draws are
    // standardized to population mean 0 / std 1 before scaling, so the
    // cluster aggregation recovers the latent targets up to asset rounding
    Rng hh_rng(mix_seed(spec.seed, kStreamHouseholds));
    Rng asset_rng(mix_seed(spec.seed, kStreamAssets));
    const int hh_n = dens.households_per_cluster;
    b.households.reserve(n_clusters * std::size_t(hh_n));
    std::size_t hh_counter = 0;
    for (std::size_t i = 0; i < n_clusters; ++i) {
        std::vector<double> v(static_cast<std::size_t>(hh_n));
        double sd = 0.0;
        do {
            for (double &x : v) x = hh_rng.next_normal();
            center(v);
            sd = std::sqrt(dot(v, v) / double(v.size()));
        } while (sd < 1e-9);
        for (double &x : v) x /= sd;

        for (int j = 0; j < hh_n; ++j) {
            const double h = mu[i] + sigma[i] * v[std::size_t(j)];
            ingest::HouseholdRow row;
            row.household_id = "sh" + zero_pad(int(hh_counter++), 6);
            row.cluster_id = b.clusters[i].cluster_id;
            row.assets.reserve(kAssetDefs.size());
            for (const auto &a : kAssetDefs) {
                const double hj = h + asset_rng.next_normal() * kAssetJitterSd;
                const double s01 = logistic((hj - a.theta) / kAssetTau);
                const auto level = std::clamp<long>(
                    long(std::floor(s01 * a.levels)), 0, a.levels - 1);
                row.assets.push_back(double(level));
            }
            b.households.push_back(std::move(row));
        }
    }

    // physical layers, one private stack per site
    const double hub_lat =
        kBaseLat + (double(grid_dim / 2) + 0.5) * kGridStepDeg;
    const double hub_lon =
        kBaseLon + (double(grid_dim / 2) + 0.5) * kGridStepDeg;
    const geo::GeoPoint hub_pt{hub_lat, hub_lon};

    auto &tiles = b.population_tiles.emplace();
    auto &mob_tiles = b.mobility_tiles.emplace();
    auto &edges = b.movement_edges.emplace();
    auto &pois = b.poi_points.emplace();
    auto &roads = b.road_segments.emplace();
    auto &buildings = b.building_points.emplace();
    auto &cell_rows = b.cells.emplace();
    auto &nl = b.nightlight_pixels.emplace();

    mob_tiles.push_back({"hub", hub_pt});
    for (std::size_t i = 0; i < n_total; ++i) {
        const auto &s = sites[i];
        const auto at = [&](double dlat, double dlon) {
            return geo::GeoPoint{s.pt.lat + dlat, s.pt.lon + dlon};
        };
        tiles.push_back({at(0.0020, 0.0020), s.z_pop});

        const std::string tile_id = "mt" + zero_pad(int(i), 4);
        mob_tiles.push_back({tile_id, at(0.0030, -0.0020)});
        edges.push_back({tile_id, "hub", s.z_mob});
        edges.push_back({"hub", tile_id, s.z_mob});

        for (long k = 0; k < s.z_poi; ++k)
            pois.push_back({at(0.0002 * double(k + 1) * (k % 2 ? -1.0 : 1.0),
                               0.00025 * double(k + 1) * ((k / 2) % 2 ? -1.0 : 1.0)),
                            b.poi_categories[0]});

        for (long k = 0; k < s.z_cell; ++k)
            cell_rows.push_back({at(0.0003 * double(k + 1), 0.0),
                                 "tw" + zero_pad(int(i), 4) + "_" +
                                     std::to_string(k)});

        buildings.push_back({at(-0.0010, 0.0010)});
        roads.push_back({at(-0.0020, -0.0020), at(-0.0020, 0.0010)});

        for (int y : year_pool)
            for (int k = 0; k < dens.nightlight_pixels_per_site; ++k) {
                const double ang =
                    2.0 * M_PI * double(k) / dens.nightlight_pixels_per_site;
                nl.push_back({at(0.003 * std::cos(ang), 0.003 * std::sin(ang)),
                              s.z_night, y});
            }
    }

    // so every category name resolves to at least one point, far from all
    // sites; only the first category carries signal
    for (std::size_t c = 1; c < b.poi_categories.size(); ++c)
        pois.push_back({geo::GeoPoint{hub_lat + 0.0004 * double(c),
                                      hub_lon - 0.0003 * double(c)},
                        b.poi_categories[c]});

    auto &demo = b.demographics.emplace();
    demo.columns = b.demographic_columns;
    const auto demo_row_of = [&](const std::string &id, const SiteVals &s) {
        ingest::DemographicsTable::Row row;
        row.location_id = id;
        row.values.resize(demo.columns.size());
        row.values[0] = s.z_demo;
        for (std::size_t j = 1; j < row.values.size(); ++j)
            row.values[j] = 10.0 + 3.0 * double(j);
        return row;
    };
    for (std::size_t i = 0; i < n_clusters; ++i)
        demo.rows.push_back(demo_row_of(b.clusters[i].cluster_id, sites[i]));
    for (std::size_t p = 0; p < spec.n_places; ++p)
        demo.rows.push_back(
            demo_row_of(b.places[p].place_id, sites[n_clusters + p]));

    if (spec.with_embeddings) {
        Rng emb_rng(mix_seed(spec.seed, kStreamEmbeddings));
        auto &emb = b.embeddings.emplace();
        const auto emb_row_of = [&](const std::string &id) {
            ingest::EmbeddingsTable::Row row;
            row.location_id = id;
            row.values.resize(ingest::EmbeddingsTable::kDim);
            for (double &x : row.values) x = emb_rng.uniform(-1.0, 1.0);
            return row;
        };
        for (const auto &c : b.clusters)
            emb.rows.push_back(emb_row_of(c.cluster_id));
        for (const auto &p : b.places)
            emb.rows.push_back(emb_row_of(p.place_id));
    }

    SynthResult out;
    out.bundle = std::move(b);
    auto &rec = out.record;
    rec.spec = spec;
    rec.eta_mu = eta_mu;
    rec.eta_sigma = eta_sigma;
    rec.g_coeffs = kGCoeffs;
    rec.f_offset = kFOffset;
    rec.f_weights = kFWeights;
    rec.planted_columns = {
        "population_in_closest_tile",
        "mobility_people_flow_out",
        "demographic_" + out.bundle.demographic_columns[0],
        "infra_poi_" + out.bundle.poi_categories[0] + "_count_1.6km",
        "connectivity_cells_within_1.6km",
        "nightlight_mean_1.6km",
    };
    rec.cluster_ids.reserve(n_clusters);
    for (const auto &c : out.bundle.clusters)
        rec.cluster_ids.push_back(c.cluster_id);
    rec.f_values = std::move(f_values);
    rec.mu_true = std::move(mu);
    rec.sigma_true = std::move(sigma);
    return out;
}

std::array<double, 2> bayes_nrmse(const SynthRecord &record) {
    if (record.mu_true.empty() ||
        record.mu_true.size() != record.sigma_true.size())
        throw Error("BadRecord", "record carries no usable cluster targets");
    const double var_mu = pop_var(record.mu_true);
    const double var_sigma = pop_var(record.sigma_true);
    return {var_mu > 0.0
                ? std::sqrt(record.eta_mu * record.eta_mu / var_mu)
                : 0.0,
            var_sigma > 0.0
                ? std::sqrt(record.eta_sigma * record.eta_sigma / var_sigma)
                : 0.0};
}

nlohmann::json record_to_json(const SynthRecord &r) {
    nlohmann::json spec = {
        {"country_code", r.spec.country_code},
        {"n_clusters", r.spec.n_clusters},
        {"n_places", r.spec.n_places},
        {"n_years", r.spec.n_years},
        {"urban_share", r.spec.urban_share},
        {"mu_noise", r.spec.mu_noise},
        {"mu_noise_ratio", r.spec.mu_noise_ratio},
        {"sigma_noise", r.spec.sigma_noise},
        {"r_target", r.spec.r_target},
        {"wealth_band_lo", r.spec.wealth_band_lo},
        {"wealth_band_hi", r.spec.wealth_band_hi},
        {"with_embeddings", r.spec.with_embeddings},
        {"densities",
         {{"households_per_cluster", r.spec.densities.households_per_cluster},
          {"nightlight_pixels_per_site",
           r.spec.densities.nightlight_pixels_per_site},
          {"max_poi_count", r.spec.densities.max_poi_count},
          {"max_cell_count", r.spec.densities.max_cell_count}}},
        {"seed", r.spec.seed},
    };
    return nlohmann::json{
        {"format", "povmap-synth"},
        {"version", 1},
        {"spec", std::move(spec)},
        {"wealth_model",
         {{"eta_mu", r.eta_mu},
          {"eta_sigma", r.eta_sigma},
          {"g_coeffs", r.g_coeffs},
          {"f_offset", r.f_offset},
          {"f_weights", r.f_weights},
          {"planted_columns", r.planted_columns}}},
        {"clusters",
         {{"ids", r.cluster_ids},
          {"f", r.f_values},
          {"mu", r.mu_true},
          {"sigma", r.sigma_true}}},
    };
}

SynthRecord record_from_json(const nlohmann::json &j) {
    try {
        if (!j.is_object() || j.value("format", "") != "povmap-synth")
            throw Error("BadRecord", "not a synth record document");
        if (j.value("version", 0) != 1)
            throw Error("BadRecord", "unsupported record version");

        SynthRecord r;
        const auto &s = j.at("spec");
        r.spec.country_code = s.at("country_code").get<std::string>();
        r.spec.n_clusters = s.at("n_clusters").get<std::size_t>();
        r.spec.n_places = s.at("n_places").get<std::size_t>();
        r.spec.n_years = s.at("n_years").get<int>();
        r.spec.urban_share = s.at("urban_share").get<double>();
        r.spec.mu_noise = s.at("mu_noise").get<double>();
        r.spec.mu_noise_ratio = s.at("mu_noise_ratio").get<double>();
        r.spec.sigma_noise = s.at("sigma_noise").get<double>();
        r.spec.r_target = s.at("r_target").get<double>();
        r.spec.wealth_band_lo = s.at("wealth_band_lo").get<double>();
        r.spec.wealth_band_hi = s.at("wealth_band_hi").get<double>();
        r.spec.with_embeddings = s.at("with_embeddings").get<bool>();
        const auto &d = s.at("densities");
        r.spec.densities.households_per_cluster =
            d.at("households_per_cluster").get<int>();
        r.spec.densities.nightlight_pixels_per_site =
            d.at("nightlight_pixels_per_site").get<int>();
        r.spec.densities.max_poi_count = d.at("max_poi_count").get<int>();
        r.spec.densities.max_cell_count = d.at("max_cell_count").get<int>();
        r.spec.seed = s.at("seed").get<std::uint64_t>();

        const auto &w = j.at("wealth_model");
        r.eta_mu = w.at("eta_mu").get<double>();
        r.eta_sigma = w.at("eta_sigma").get<double>();
        r.g_coeffs = w.at("g_coeffs").get<std::array<double, 3>>();
        r.f_offset = w.at("f_offset").get<double>();
        r.f_weights = w.at("f_weights").get<std::array<double, 6>>();
        r.planted_columns =
            w.at("planted_columns").get<std::vector<std::string>>();

        const auto &c = j.at("clusters");
        r.cluster_ids = c.at("ids").get<std::vector<std::string>>();
        r.f_values = c.at("f").get<std::vector<double>>();
        r.mu_true = c.at("mu").get<std::vector<double>>();
        r.sigma_true = c.at("sigma").get<std::vector<double>>();
        if (r.f_values.size() != r.cluster_ids.size() ||
            r.mu_true.size() != r.cluster_ids.size() ||
            r.sigma_true.size() != r.cluster_ids.size())
            throw Error("BadRecord", "cluster target arrays disagree in length");
        return r;
    } catch (const nlohmann::json::exception &e) {
        throw Error("BadRecord", std::string("malformed record: ") + e.what());
    }
}

void write_record(const std::filesystem::path &file, const SynthRecord &r) {
    std::ofstream out(file);
    if (!out) throw Error("IoError", "cannot open " + file.string() + " for writing");
    out << record_to_json(r).dump(2) << "\n";
    if (!out) throw Error("IoError", "failed writing " + file.string());
}

SynthRecord read_record(const std::filesystem::path &file) {
    std::ifstream in(file);
    if (!in) throw Error("IoError", "cannot open " + file.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception &e) {
        throw Error("BadRecord", std::string("parse failure: ") + e.what());
    }
    return record_from_json(doc);
}

} // namespace povmap::synthkit
