#include "povmap/mapgen.hpp"

#include "povmap/common.hpp"
#include "povmap/evalreport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <utility>

namespace povmap::mapgen {

namespace {

constexpr double kPopulationRadiusKm = 1.6;

// svg pixel coordinates; two decimals keep the file compact and diff-stable
std::string px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

const nlohmann::json &member(const nlohmann::json &j, const char *key) {
    if (!j.is_object()) throw Error("BadGeoJson", "expected an object");
    const auto it = j.find(key);
    if (it == j.end()) throw Error("BadGeoJson", std::string("missing member ") + key);
    return *it;
}

double number_or_nan(const nlohmann::json &j, const char *what) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (!j.is_number()) throw Error("BadGeoJson", std::string(what) + " is not a number");
    return j.get<double>();
}

double number_of(const nlohmann::json &j, const char *what) {
    if (!j.is_number()) throw Error("BadGeoJson", std::string(what) + " is not a number");
    return j.get<double>();
}

std::string string_of(const nlohmann::json &j, const char *what) {
    if (!j.is_string()) throw Error("BadGeoJson", std::string(what) + " is not a string");
    return j.get<std::string>();
}

nlohmann::json json_number(double v) {
    // NaN dumps as null either way; keeping the double preserves in-memory
    // round trips
    return nlohmann::json(v);
}

} // namespace

std::string model_fingerprint(const gbrt::GBRTEnsemble &model) {
    const std::string blob = gbrt::model_to_json(model);
    std::uint64_t h = 1469598103934665603ull; // fnv-1a
    for (const unsigned char ch : blob) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

PovertyMap infer_places(const gbrt::GBRTEnsemble &model, const ingest::DatasetBundle &bundle,
                        const features::FeatureConfig &cfg) {
    cfg.validate();
    std::set<std::string> seen;
    for (const auto &p : bundle.places) {
        if (!seen.insert(p.place_id).second) {
            throw Error("DuplicatePlace", "place id " + p.place_id + " appears more than once");
        }
    }

    PovertyMap map;
    map.model_fingerprint = model_fingerprint(model);
    if (bundle.places.empty()) return map;

    features::FeatureMatrix matrix =
        features::assemble(features::place_locations(bundle), bundle, cfg);
    if (!bundle.clusters.empty()) {
        features::FeatureMatrix cluster_matrix =
            features::assemble(features::cluster_locations(bundle.clusters), bundle, cfg);
        const features::Standardization params = features::standardize_per_year(cluster_matrix);
        features::apply_standardization(matrix, params);
    } else {
        features::standardize_per_year(matrix);
    }

    const std::vector<std::array<double, 2>> pred =
        gbrt::predict(model, matrix.columns, matrix.values);

    std::optional<features::PopulationIndex> pop;
    if (bundle.population_tiles) {
        pop = features::PopulationIndex::build(*bundle.population_tiles);
    }

    map.entries.reserve(bundle.places.size());
    for (std::size_t i = 0; i < bundle.places.size(); ++i) {
        const auto &p = bundle.places[i];
        MapEntry e;
        e.place_id = p.place_id;
        e.pt = p.pt;
        e.settlement = ingest::settlement_of(p.kind);
        e.mu = pred[i][0];
        e.sigma = pred[i][1];
        if (pop) {
            double total = 0.0;
            for (const auto &[slot, dist] : pop->index.within_radius_slots(p.pt, kPopulationRadiusKm)) {
                (void)dist;
                total += pop->population[slot];
            }
            e.population = total;
        } else {
            e.population = std::numeric_limits<double>::quiet_NaN();
        }
        map.entries.push_back(std::move(e));
    }
    return map;
}

nlohmann::json export_geojson(const PovertyMap &map) {
    nlohmann::json doc;
    doc["type"] = "FeatureCollection";
    doc["metadata"] = {{"model", map.model_fingerprint}, {"generated", map.timestamp}};
    nlohmann::json features = nlohmann::json::array();
    for (const MapEntry &e : map.entries) {
        nlohmann::json f;
        f["type"] = "Feature";
        f["id"] = e.place_id;
        f["geometry"] = {{"type", "Point"},
                         {"coordinates", {json_number(e.pt.lon), json_number(e.pt.lat)}}};
        f["properties"] = {{"mu", json_number(e.mu)},
                           {"sigma", json_number(e.sigma)},
                           {"settlement", std::string(ingest::to_string(e.settlement))},
                           {"population", json_number(e.population)}};
        features.push_back(std::move(f));
    }
    doc["features"] = std::move(features);
    return doc;
}

PovertyMap import_geojson(const nlohmann::json &doc) {
    if (string_of(member(doc, "type"), "type") != "FeatureCollection") {
        throw Error("BadGeoJson", "document is not a FeatureCollection");
    }
    PovertyMap map;
    const nlohmann::json &meta = member(doc, "metadata");
    map.model_fingerprint = string_of(member(meta, "model"), "metadata.model");
    map.timestamp = string_of(member(meta, "generated"), "metadata.generated");

    const nlohmann::json &features = member(doc, "features");
    if (!features.is_array()) throw Error("BadGeoJson", "features is not an array");
    for (const nlohmann::json &f : features) {
        if (string_of(member(f, "type"), "feature type") != "Feature") {
            throw Error("BadGeoJson", "feature entry is not a Feature");
        }
        MapEntry e;
        e.place_id = string_of(member(f, "id"), "feature id");
        const nlohmann::json &geom = member(f, "geometry");
        if (string_of(member(geom, "type"), "geometry type") != "Point") {
            throw Error("BadGeoJson", "geometry is not a Point");
        }
        const nlohmann::json &coords = member(geom, "coordinates");
        if (!coords.is_array() || coords.size() != 2) {
            throw Error("BadGeoJson", "coordinates must be [lon, lat]");
        }
        e.pt.lon = number_of(coords[0], "longitude");
        e.pt.lat = number_of(coords[1], "latitude");
        const nlohmann::json &props = member(f, "properties");
        e.mu = number_of(member(props, "mu"), "mu");
        e.sigma = number_of(member(props, "sigma"), "sigma");
        e.settlement =
            ingest::settlement_from_string(string_of(member(props, "settlement"), "settlement"));
        e.population = number_or_nan(member(props, "population"), "population");
        map.entries.push_back(std::move(e));
    }
    return map;
}

void write_geojson(const std::filesystem::path &file, const PovertyMap &map) {
    std::ofstream out(file);
    if (!out) throw Error("IoError", "cannot open " + file.string() + " for writing");
    out << export_geojson(map).dump(2) << "\n";
    if (!out) throw Error("IoError", "failed writing " + file.string());
}

PovertyMap read_geojson(const std::filesystem::path &file) {
    std::ifstream in(file);
    if (!in) throw Error("IoError", "cannot open " + file.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception &e) {
        throw Error("BadGeoJson", std::string("parse failure: ") + e.what());
    }
    return import_geojson(doc);
}

csv::Table map_table(const PovertyMap &map) {
    csv::Table t;
    t.header = {"place_id", "lat", "lon", "settlement", "mu", "sigma", "population"};
    t.rows.reserve(map.entries.size());
    for (const MapEntry &e : map.entries) {
        t.rows.push_back({e.place_id, format_double(e.pt.lat), format_double(e.pt.lon),
                          std::string(ingest::to_string(e.settlement)), format_double(e.mu),
                          format_double(e.sigma),
                          std::isnan(e.population) ? "" : format_double(e.population)});
    }
    return t;
}

std::string render_scatter(const std::vector<double> &mu, const std::vector<double> &sigma,
                           const std::vector<bool> &urban) {
    if (mu.size() != sigma.size() || mu.size() != urban.size()) {
        throw Error("LengthMismatch", "scatter inputs differ in length");
    }
    if (mu.empty()) throw Error("EmptyMap", "nothing to plot");
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (!std::isfinite(mu[i]) || !std::isfinite(sigma[i])) {
            throw Error("BadValue", "non-finite scatter point");
        }
    }

    const auto [mu_lo, mu_hi] = std::minmax_element(mu.begin(), mu.end());
    const auto [sg_lo, sg_hi] = std::minmax_element(sigma.begin(), sigma.end());
    const auto padded = [](double lo, double hi) {
        const double span = hi - lo;
        const double pad = span > 0.0 ? 0.05 * span : 1.0;
        return std::pair<double, double>(lo - pad, hi + pad);
    };
    const auto [xmin, xmax] = padded(*mu_lo, *mu_hi);
    const auto [ymin, ymax] = padded(*sg_lo, *sg_hi);

    const double left = 62.0, top = 16.0, plot_w = 560.0, plot_h = 416.0;
    const double right = left + plot_w, bottom = top + plot_h;
    const auto sx = [&](double v) { return left + (v - xmin) / (xmax - xmin) * plot_w; };
    const auto sy = [&](double v) { return bottom - (v - ymin) / (ymax - ymin) * plot_h; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
           "viewBox=\"0 0 640 480\" font-family=\"sans-serif\""
        << " data-x-min=\"" << format_double(xmin) << "\" data-x-max=\"" << format_double(xmax)
        << "\" data-y-min=\"" << format_double(ymin) << "\" data-y-max=\"" << format_double(ymax)
        << "\">\n";
    svg << "<style>\n"
           ".bg{fill:#ffffff;}\n"
           ".axis{stroke:#333333;stroke-width:1;fill:none;}\n"
           ".tick{font-size:11px;fill:#333333;}\n"
           ".label{font-size:13px;fill:#111111;}\n"
           ".pt-rural{fill:#c05621;fill-opacity:0.75;}\n"
           ".pt-urban{fill:#2b6cb0;fill-opacity:0.75;}\n"
           ".fit-rural{stroke:#9c4221;stroke-width:2;fill:none;}\n"
           ".fit-urban{stroke:#2c5282;stroke-width:2;fill:none;}\n"
           "</style>\n";
    svg << "<rect class=\"bg\" x=\"0\" y=\"0\" width=\"640\" height=\"480\"/>\n";
    svg << "<defs><clipPath id=\"plot\"><rect x=\"" << px(left) << "\" y=\"" << px(top)
        << "\" width=\"" << px(plot_w) << "\" height=\"" << px(plot_h)
        << "\"/></clipPath></defs>\n";

    svg << "<path class=\"axis\" d=\"M" << px(left) << "," << px(top) << " L" << px(left) << ","
        << px(bottom) << " L" << px(right) << "," << px(bottom) << "\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 4.0;
        const double fy = ymin + (ymax - ymin) * i / 4.0;
        svg << "<line class=\"axis\" x1=\"" << px(sx(fx)) << "\" y1=\"" << px(bottom)
            << "\" x2=\"" << px(sx(fx)) << "\" y2=\"" << px(bottom + 4) << "\"/>\n";
        svg << "<text class=\"tick\" x=\"" << px(sx(fx)) << "\" y=\"" << px(bottom + 17)
            << "\" text-anchor=\"middle\">" << tick_label(fx) << "</text>\n";
        svg << "<line class=\"axis\" x1=\"" << px(left - 4) << "\" y1=\"" << px(sy(fy))
            << "\" x2=\"" << px(left) << "\" y2=\"" << px(sy(fy)) << "\"/>\n";
        svg << "<text class=\"tick\" x=\"" << px(left - 7) << "\" y=\"" << px(sy(fy) + 4)
            << "\" text-anchor=\"end\">" << tick_label(fy) << "</text>\n";
    }
    svg << "<text class=\"label\" x=\"" << px(left + plot_w / 2)
        << "\" y=\"470\" text-anchor=\"middle\">predicted mean wealth index</text>\n";
    svg << "<text class=\"label\" transform=\"translate(14 " << px(top + plot_h / 2)
        << ") rotate(-90)\" text-anchor=\"middle\">predicted standard deviation</text>\n";

    svg << "<g clip-path=\"url(#plot)\">\n";
    bool group_present[2] = {false, false};
    for (const int g : {0, 1}) {
        std::vector<double> gmu, gsigma;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            if (urban[i] == (g == 1)) {
                gmu.push_back(mu[i]);
                gsigma.push_back(sigma[i]);
            }
        }
        if (gmu.empty()) continue;
        group_present[g] = true;
        const evalreport::SeriesStats stats = evalreport::series_stats(gmu, gsigma);
        if (!stats.has_fit) continue;
        const auto [lo, hi] = std::minmax_element(gmu.begin(), gmu.end());
        svg << "<path class=\"fit-" << (g == 1 ? "urban" : "rural") << "\" d=\"";
        const int samples = 64;
        for (int s = 0; s <= samples; ++s) {
            const double x = *lo + (*hi - *lo) * s / samples;
            const double y = stats.coeffs[0] + stats.coeffs[1] * x + stats.coeffs[2] * x * x;
            svg << (s == 0 ? "M" : " L") << px(sx(x)) << "," << px(sy(y));
        }
        svg << "\"/>\n";
    }
    for (std::size_t i = 0; i < mu.size(); ++i) {
        svg << "<circle class=\"pt-" << (urban[i] ? "urban" : "rural") << "\" cx=\""
            << px(sx(mu[i])) << "\" cy=\"" << px(sy(sigma[i])) << "\" r=\"3\"/>\n";
    }
    svg << "</g>\n";

    double ly = top + 8.0;
    for (const int g : {1, 0}) {
        if (!group_present[g]) continue;
        svg << "<rect class=\"pt-" << (g == 1 ? "urban" : "rural") << "\" x=\"" << px(right - 70)
            << "\" y=\"" << px(ly) << "\" width=\"12\" height=\"12\"/>\n";
        svg << "<text class=\"tick\" x=\"" << px(right - 54) << "\" y=\"" << px(ly + 10) << "\">"
            << (g == 1 ? "urban" : "rural") << "</text>\n";
        ly += 18.0;
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string render_scatter(const PovertyMap &map) {
    std::vector<double> mu, sigma;
    std::vector<bool> urban;
    mu.reserve(map.entries.size());
    sigma.reserve(map.entries.size());
    urban.reserve(map.entries.size());
    for (const MapEntry &e : map.entries) {
        mu.push_back(e.mu);
        sigma.push_back(e.sigma);
        urban.push_back(e.settlement == ingest::Settlement::urban);
    }
    return render_scatter(mu, sigma, urban);
}

} // namespace povmap::mapgen
