#include "povmap/features.hpp"

#include "povmap/common.hpp"
#include "povmap/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace povmap::features {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// half-width of the fixed infrastructure buffer
constexpr double kBoxWidthKm = 1.6;
constexpr double kBoxHalfKm = kBoxWidthKm / 2.0;

double floored_meters(double km) { return std::max(km * 1000.0, 1.0); }

} // namespace

void FeatureConfig::validate() const {
    // fixed shapes: the canonical column layout bakes in 4 radii and 3 betas
    if (radii_km.size() != 4)
        throw Error("BadConfig", "expected 4 radii, got " + std::to_string(radii_km.size()));
    if (beta_pop.size() != 3 || beta_mob.size() != 3)
        throw Error("BadConfig", "expected 3 population and 3 mobility betas");
    for (std::size_t i = 0; i < radii_km.size(); ++i) {
        if (!(radii_km[i] > 0.0))
            throw Error("BadConfig", "radius must be positive");
        if (i > 0 && !(radii_km[i] > radii_km[i - 1]))
            throw Error("BadConfig", "radii must be strictly ascending");
    }
    for (double b : beta_pop)
        if (!(b > 0.0)) throw Error("BadConfig", "beta must be positive");
    for (double b : beta_mob)
        if (!(b > 0.0)) throw Error("BadConfig", "beta must be positive");
    if (!(nightlight_rad_min >= 0.0))
        throw Error("BadConfig", "nightlight threshold must be non-negative");
    if (!(pagerank_damping > 0.0) || !(pagerank_damping < 1.0))
        throw Error("BadConfig", "pagerank damping must lie in (0,1)");
    if (!(pagerank_tol > 0.0))
        throw Error("BadConfig", "pagerank tolerance must be positive");
}

MobilityGraph build_mobility_graph(const std::vector<ingest::MovementEdge> &edges,
                                   const std::vector<ingest::MobilityTile> &tiles) {
    MobilityGraph g;
    g.nodes.reserve(tiles.size());
    std::unordered_map<std::string, std::size_t> slot_of;
    slot_of.reserve(tiles.size());
    for (const auto &t : tiles) {
        if (!slot_of.emplace(t.tile_id, g.nodes.size()).second)
            throw Error("DuplicateTile", "mobility tile listed twice: " + t.tile_id);
        g.nodes.push_back({t.tile_id, t.pt});
    }
    // sum parallel records into one weighted edge, first-seen order
    std::unordered_map<std::uint64_t, std::size_t> edge_slot;
    edge_slot.reserve(edges.size());
    const std::uint64_t n = g.nodes.size();
    for (const auto &e : edges) {
        auto from = slot_of.find(e.tile_from);
        auto to = slot_of.find(e.tile_to);
        if (from == slot_of.end())
            throw Error("UnknownTile", "movement edge from unknown tile: " + e.tile_from);
        if (to == slot_of.end())
            throw Error("UnknownTile", "movement edge to unknown tile: " + e.tile_to);
        const std::uint64_t key = static_cast<std::uint64_t>(from->second) * n + to->second;
        auto [it, fresh] = edge_slot.emplace(key, g.edges.size());
        if (fresh)
            g.edges.push_back({from->second, to->second, e.count});
        else
            g.edges[it->second].weight += e.count;
    }
    return g;
}

std::vector<double> pagerank(const MobilityGraph &g, bool weighted,
                             double damping, double tol) {
    const std::size_t n = g.nodes.size();
    if (n == 0) return {};

    std::vector<double> out_weight(n, 0.0);
    for (const auto &e : g.edges)
        out_weight[e.from] += weighted ? e.weight : 1.0;

    std::vector<double> x(n, 1.0 / static_cast<double>(n));
    std::vector<double> next(n);
    const double base = (1.0 - damping) / static_cast<double>(n);
    for (int iter = 0; iter < 100000; ++iter) {
        double dangling = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (out_weight[i] == 0.0) dangling += x[i];
        std::fill(next.begin(), next.end(),
                  base + damping * dangling / static_cast<double>(n));
        for (const auto &e : g.edges) {
            const double w = weighted ? e.weight : 1.0;
            next[e.to] += damping * x[e.from] * w / out_weight[e.from];
        }
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) delta += std::abs(next[i] - x[i]);
        x.swap(next);
        if (delta < tol) break;
    }
    return x;
}

std::vector<Location> cluster_locations(const std::vector<ingest::ClusterRow> &clusters) {
    std::vector<Location> out;
    out.reserve(clusters.size());
    for (const auto &c : clusters)
        out.push_back({c.cluster_id, c.pt, c.year, c.settlement == ingest::Settlement::urban});
    return out;
}

std::vector<Location> place_locations(const ingest::DatasetBundle &b) {
    std::vector<Location> out;
    out.reserve(b.places.size());
    const int year = b.newest_year();
    for (const auto &p : b.places)
        out.push_back({p.place_id, p.pt, year, ingest::is_urban(p.kind)});
    return out;
}

std::size_t FeatureMatrix::col(const std::string &name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw Error("MissingColumn", "no feature column named " + name);
}

PopulationIndex PopulationIndex::build(const std::vector<ingest::PopulationTile> &tiles) {
    PopulationIndex out;
    std::vector<std::pair<std::string, geo::GeoPoint>> items;
    items.reserve(tiles.size());
    out.population.reserve(tiles.size());
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        items.emplace_back(zero_pad(i, 9), tiles[i].pt);
        out.population.push_back(tiles[i].population);
    }
    out.index = geo::SpatialIndex::build(std::move(items));
    return out;
}

MobilityContext MobilityContext::build(const MobilityGraph &g, const FeatureConfig &cfg) {
    MobilityContext ctx;
    ctx.graph = g;
    const std::size_t n = g.nodes.size();

    std::vector<std::pair<std::string, geo::GeoPoint>> items;
    items.reserve(n);
    for (const auto &node : g.nodes) items.emplace_back(node.tile_id, node.pt);
    ctx.node_index = geo::SpatialIndex::build(std::move(items));

    ctx.strength_in.assign(n, 0.0);
    ctx.strength_out.assign(n, 0.0);
    ctx.degree_in.assign(n, 0);
    ctx.degree_out.assign(n, 0);
    std::vector<double> sum_in(n, 0.0), sum_out(n, 0.0);
    std::vector<std::size_t> cnt_in(n, 0), cnt_out(n, 0);
    for (const auto &e : g.edges) {
        ctx.strength_out[e.from] += e.weight;
        ctx.strength_in[e.to] += e.weight;
        ctx.degree_out[e.from] += 1;
        ctx.degree_in[e.to] += 1;
        if (e.from != e.to) {
            const double km = geo::haversine_km(g.nodes[e.from].pt, g.nodes[e.to].pt);
            sum_out[e.from] += km;
            cnt_out[e.from] += 1;
            sum_in[e.to] += km;
            cnt_in[e.to] += 1;
        }
    }
    ctx.avg_in_km.assign(n, kNaN);
    ctx.avg_out_km.assign(n, kNaN);
    for (std::size_t i = 0; i < n; ++i) {
        if (cnt_in[i]) ctx.avg_in_km[i] = sum_in[i] / static_cast<double>(cnt_in[i]);
        if (cnt_out[i]) ctx.avg_out_km[i] = sum_out[i] / static_cast<double>(cnt_out[i]);
    }
    ctx.pagerank_scores = pagerank(g, false, cfg.pagerank_damping, cfg.pagerank_tol);
    ctx.weighted_pagerank_scores = pagerank(g, true, cfg.pagerank_damping, cfg.pagerank_tol);
    return ctx;
}

PoiIndex PoiIndex::build(const std::vector<ingest::PoiPoint> &pois,
                         const std::vector<std::string> &categories) {
    PoiIndex out;
    out.categories = categories;
    std::vector<std::vector<std::pair<std::string, geo::GeoPoint>>> buckets(categories.size());
    std::unordered_map<std::string, std::size_t> cat_slot;
    for (std::size_t i = 0; i < categories.size(); ++i) cat_slot.emplace(categories[i], i);
    for (std::size_t i = 0; i < pois.size(); ++i) {
        auto it = cat_slot.find(pois[i].category);
        if (it == cat_slot.end())
            throw Error("UnknownCategory", "poi category not in manifest: " + pois[i].category);
        buckets[it->second].emplace_back(zero_pad(i, 9), pois[i].pt);
    }
    out.per_category.reserve(categories.size());
    for (auto &bucket : buckets)
        out.per_category.push_back(geo::SpatialIndex::build(std::move(bucket)));
    return out;
}

CellIndex CellIndex::build(const std::vector<ingest::CellRow> &cells) {
    CellIndex out;
    std::vector<std::pair<std::string, geo::GeoPoint>> items;
    items.reserve(cells.size());
    out.tower_id.reserve(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        items.emplace_back(zero_pad(i, 9), cells[i].pt);
        out.tower_id.push_back(cells[i].tower_id);
    }
    out.index = geo::SpatialIndex::build(std::move(items));
    return out;
}

NightlightIndex NightlightIndex::build(const std::vector<ingest::NightlightPixel> &pixels) {
    NightlightIndex out;
    std::map<int, std::vector<std::pair<std::string, geo::GeoPoint>>> items;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        items[pixels[i].year].emplace_back(zero_pad(i, 9), pixels[i].pt);
        out.radiance[pixels[i].year].push_back(pixels[i].radiance);
    }
    for (auto &[year, list] : items)
        out.by_year.emplace(year, geo::SpatialIndex::build(std::move(list)));
    return out;
}

std::array<double, 9> population_features(const geo::GeoPoint &loc,
                                          const PopulationIndex &tiles,
                                          const FeatureConfig &cfg) {
    std::array<double, 9> out;
    out.fill(kNaN);
    if (tiles.index.empty()) return out;

    auto [slot, km] = tiles.index.nearest_slot(loc);
    out[0] = km;
    out[1] = tiles.population[slot];
    for (std::size_t r = 0; r < cfg.radii_km.size(); ++r) {
        double total = 0.0;
        for (const auto &[s, d] : tiles.index.within_radius_slots(loc, cfg.radii_km[r]))
            total += tiles.population[s];
        out[2 + r] = total;
    }
    const double meters = floored_meters(km);
    for (std::size_t b = 0; b < cfg.beta_pop.size(); ++b)
        out[6 + b] = tiles.population[slot] / std::pow(meters, cfg.beta_pop[b]);
    return out;
}

std::array<double, 27> mobility_features(const geo::GeoPoint &loc,
                                         const MobilityContext &ctx,
                                         const FeatureConfig &cfg) {
    std::array<double, 27> out;
    out.fill(kNaN);
    if (ctx.node_index.empty()) return out;

    auto [slot, km] = ctx.node_index.nearest_slot(loc);
    out[0] = km;
    out[1] = ctx.avg_in_km[slot];
    out[2] = ctx.avg_out_km[slot];
    const double meters = floored_meters(km);
    const double metrics[6] = {
        ctx.strength_in[slot],
        ctx.strength_out[slot],
        static_cast<double>(ctx.degree_in[slot]),
        static_cast<double>(ctx.degree_out[slot]),
        ctx.pagerank_scores[slot],
        ctx.weighted_pagerank_scores[slot],
    };
    std::size_t k = 3;
    for (double m : metrics) {
        out[k++] = m; // raw, the beta=none variant
        for (double beta : cfg.beta_mob) out[k++] = m / std::pow(meters, beta);
    }
    return out;
}

std::vector<double> demographics_features(const std::string &location_id,
                                          const ingest::DemographicsTable &table) {
    if (table.columns.size() != ingest::kDemographicColumns)
        throw Error("ColumnCountMismatch",
                    "demographics table has " + std::to_string(table.columns.size()) +
                        " columns, expected " + std::to_string(ingest::kDemographicColumns));
    for (const auto &row : table.rows)
        if (row.location_id == location_id) return row.values;
    return std::vector<double>(ingest::kDemographicColumns, kNaN);
}

namespace {

struct Planar {
    double x = 0.0; // km east
    double y = 0.0; // km north
};

Planar to_planar(const geo::GeoPoint &origin, const geo::GeoPoint &p) {
    const double coslat = std::cos(origin.lat * std::numbers::pi / 180.0);
    return {geo::wrap_lon_delta(p.lon - origin.lon) * geo::kKmPerDegree * coslat,
            (p.lat - origin.lat) * geo::kKmPerDegree};
}

double point_segment_km(const Planar &a, const Planar &b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) t = std::clamp(-(a.x * dx + a.y * dy) / len2, 0.0, 1.0);
    const double px = a.x + t * dx, py = a.y + t * dy;
    return std::sqrt(px * px + py * py);
}

// Liang-Barsky clip of segment a->b to the square [-h,h]^2; returns the
// clipped length in km, or a negative value when the segment misses the box.
double clipped_length_km(const Planar &a, const Planar &b, double h) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    double t0 = 0.0, t1 = 1.0;
    const double p[4] = {-dx, dx, -dy, dy};
    const double q[4] = {a.x + h, h - a.x, a.y + h, h - a.y};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) return -1.0;
        } else {
            const double t = q[i] / p[i];
            if (p[i] < 0.0) {
                if (t > t1) return -1.0;
                if (t > t0) t0 = t;
            } else {
                if (t < t0) return -1.0;
                if (t < t1) t1 = t;
            }
        }
    }
    return (t1 - t0) * std::sqrt(dx * dx + dy * dy);
}

bool in_box(const Planar &p, double h) {
    return std::abs(p.x) <= h && std::abs(p.y) <= h;
}

double cross2(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

// Junction points inside the box: endpoints shared by two or more segments,
// plus strict-interior crossings. Deduplicated by exact coordinates.
std::size_t road_intersections(const std::vector<std::pair<Planar, Planar>> &segs, double h) {
    std::set<std::pair<double, double>> junctions;

    std::map<std::pair<double, double>, int> endpoint_use;
    for (const auto &[a, b] : segs) {
        if (a.x == b.x && a.y == b.y) {
            if (in_box(a, h)) endpoint_use[{a.x, a.y}] += 1;
            continue;
        }
        if (in_box(a, h)) endpoint_use[{a.x, a.y}] += 1;
        if (in_box(b, h)) endpoint_use[{b.x, b.y}] += 1;
    }
    for (const auto &[pt, uses] : endpoint_use)
        if (uses >= 2) junctions.insert(pt);

    for (std::size_t i = 0; i < segs.size(); ++i) {
        const auto &[p1, p2] = segs[i];
        const double d1x = p2.x - p1.x, d1y = p2.y - p1.y;
        for (std::size_t j = i + 1; j < segs.size(); ++j) {
            const auto &[q1, q2] = segs[j];
            const double d2x = q2.x - q1.x, d2y = q2.y - q1.y;
            const double denom = cross2(d1x, d1y, d2x, d2y);
            if (denom == 0.0) continue; // parallel or collinear
            const double rx = q1.x - p1.x, ry = q1.y - p1.y;
            const double t = cross2(rx, ry, d2x, d2y) / denom;
            const double u = cross2(rx, ry, d1x, d1y) / denom;
            if (t > 0.0 && t < 1.0 && u > 0.0 && u < 1.0) {
                const Planar pt{p1.x + t * d1x, p1.y + t * d1y};
                if (in_box(pt, h)) junctions.insert({pt.x, pt.y});
            }
        }
    }
    return junctions.size();
}

std::array<double, 4> road_features(const geo::GeoPoint &loc,
                                    const std::vector<ingest::RoadSegment> &roads) {
    std::array<double, 4> out = {kNaN, 0.0, 0.0, 0.0};
    if (roads.empty()) return out;

    double closest = std::numeric_limits<double>::infinity();
    double length = 0.0;
    std::size_t count = 0;
    std::vector<std::pair<Planar, Planar>> boxed;
    for (const auto &seg : roads) {
        const Planar a = to_planar(loc, seg.a);
        const Planar b = to_planar(loc, seg.b);
        closest = std::min(closest, point_segment_km(a, b));
        const double clipped = clipped_length_km(a, b, kBoxHalfKm);
        if (clipped >= 0.0) {
            count += 1;
            length += clipped;
            boxed.emplace_back(a, b);
        }
    }
    out[0] = closest;
    out[1] = static_cast<double>(count);
    out[2] = length;
    out[3] = static_cast<double>(road_intersections(boxed, kBoxHalfKm));
    return out;
}

} // namespace

std::vector<double> infrastructure_features(const geo::GeoPoint &loc,
                                            const PoiIndex &pois,
                                            const std::vector<ingest::RoadSegment> &roads,
                                            const geo::SpatialIndex &buildings,
                                            const FeatureConfig &cfg) {
    (void)cfg;
    std::vector<double> out;
    out.reserve(pois.categories.size() * 2 + 6);
    const geo::BBox box{loc, kBoxWidthKm};
    for (const auto &index : pois.per_category) {
        if (index.empty()) {
            out.push_back(0.0);
            out.push_back(kNaN);
        } else {
            out.push_back(static_cast<double>(index.within_bbox_slots(box).size()));
            out.push_back(index.nearest_slot(loc).second);
        }
    }
    if (buildings.empty()) {
        out.push_back(0.0);
        out.push_back(kNaN);
    } else {
        out.push_back(static_cast<double>(buildings.within_bbox_slots(box).size()));
        out.push_back(buildings.nearest_slot(loc).second);
    }
    for (double v : road_features(loc, roads)) out.push_back(v);
    return out;
}

std::array<double, 9> connectivity_features(const geo::GeoPoint &loc,
                                            const CellIndex &cells,
                                            const FeatureConfig &cfg) {
    std::array<double, 9> out;
    out.fill(0.0);
    out[0] = kNaN;
    if (cells.index.empty()) return out;

    out[0] = cells.index.nearest_slot(loc).second;
    for (std::size_t r = 0; r < cfg.radii_km.size(); ++r) {
        const auto hits = cells.index.within_radius_slots(loc, cfg.radii_km[r]);
        out[1 + r] = static_cast<double>(hits.size());
        std::unordered_set<std::string_view> towers;
        for (const auto &[slot, d] : hits) towers.insert(cells.tower_id[slot]);
        out[5 + r] = static_cast<double>(towers.size());
    }
    return out;
}

std::array<double, 36> nightlight_features(const geo::GeoPoint &loc, int year,
                                           const NightlightIndex &pixels,
                                           const FeatureConfig &cfg) {
    std::array<double, 36> out;
    out.fill(kNaN);
    auto it = pixels.by_year.find(year);
    if (it == pixels.by_year.end()) return out;
    const auto &radiance = pixels.radiance.at(year);

    for (std::size_t r = 0; r < cfg.radii_km.size(); ++r) {
        std::vector<double> rad;
        for (const auto &[slot, d] : it->second.within_radius_slots(loc, cfg.radii_km[r]))
            rad.push_back(radiance[slot]);
        if (rad.empty()) continue;
        std::sort(rad.begin(), rad.end());
        const std::size_t n = rad.size();
        double sum = 0.0, lit_sum = 0.0;
        std::size_t lit = 0;
        for (double v : rad) {
            sum += v;
            if (v >= cfg.nightlight_rad_min) {
                lit += 1;
                lit_sum += v;
            }
        }
        double *o = &out[9 * r];
        o[0] = rad.front();
        o[1] = rad.back();
        o[2] = sum / static_cast<double>(n);
        o[3] = (n % 2) ? rad[n / 2] : (rad[n / 2 - 1] + rad[n / 2]) / 2.0;
        o[4] = static_cast<double>(lit) / static_cast<double>(n);
        o[5] = o[4]; // pixels are equal-area by contract
        o[6] = sum > 0.0 ? lit_sum / sum : 0.0;
        const std::size_t k = (3 * n + 9) / 10; // ceil(0.3 n)
        double top = 0.0, bottom = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            bottom += rad[i];
            top += rad[n - 1 - i];
        }
        o[7] = top / static_cast<double>(k);
        o[8] = bottom / static_cast<double>(k);
    }
    return out;
}

namespace {

void push_columns(FeatureMatrix &m, const ingest::DatasetBundle &bundle,
                  const FeatureConfig &cfg, bool with_embeddings) {
    auto add = [&](std::string name, const char *source) {
        m.columns.push_back(std::move(name));
        m.sources.emplace_back(source);
    };

    add("population_distance_to_closest_tile_km", "population");
    add("population_in_closest_tile", "population");
    for (double r : cfg.radii_km)
        add("population_total_within_" + format_double(r) + "km", "population");
    for (double b : cfg.beta_pop)
        add("population_gravitational_closest_tile_beta_" + format_double(b), "population");

    add("mobility_distance_to_closest_tile_km", "mobility");
    add("mobility_average_distance_in_km", "mobility");
    add("mobility_average_distance_out_km", "mobility");
    for (const char *metric : {"people_flow_in", "people_flow_out", "in_degree",
                               "out_degree", "pagerank", "weighted_pagerank"}) {
        add("mobility_" + std::string(metric), "mobility");
        for (double b : cfg.beta_mob)
            add("mobility_" + std::string(metric) + "_beta_" + format_double(b), "mobility");
    }

    for (const auto &name : bundle.demographic_columns)
        add("demographic_" + name, "demographics");

    for (const auto &cat : bundle.poi_categories) {
        add("infra_poi_" + cat + "_count_" + format_double(kBoxWidthKm) + "km",
            "infrastructure");
        add("infra_poi_" + cat + "_distance_km", "infrastructure");
    }
    add("infra_buildings_count_" + format_double(kBoxWidthKm) + "km", "infrastructure");
    add("infra_buildings_distance_km", "infrastructure");
    add("infra_roads_distance_km", "infrastructure");
    add("infra_roads_count_" + format_double(kBoxWidthKm) + "km", "infrastructure");
    add("infra_roads_length_km_" + format_double(kBoxWidthKm) + "km", "infrastructure");
    add("infra_roads_intersections_" + format_double(kBoxWidthKm) + "km", "infrastructure");

    add("connectivity_distance_to_closest_cell_km", "connectivity");
    for (double r : cfg.radii_km)
        add("connectivity_cells_within_" + format_double(r) + "km", "connectivity");
    for (double r : cfg.radii_km)
        add("connectivity_towers_within_" + format_double(r) + "km", "connectivity");

    for (double r : cfg.radii_km)
        for (const char *stat : {"min", "max", "mean", "median", "frac_pixels",
                                 "frac_area", "frac_sum_rad", "t30_mean", "l30_mean"})
            add("nightlight_" + std::string(stat) + "_" + format_double(r) + "km",
                "nightlight");

    add("settlement_urban", "settlement");

    if (with_embeddings)
        for (std::size_t i = 0; i < ingest::EmbeddingsTable::kDim; ++i)
            add("embedding_" + zero_pad(i, 3), "embedding");
}

} // namespace

FeatureMatrix assemble(const std::vector<Location> &locations,
                       const ingest::DatasetBundle &bundle,
                       const FeatureConfig &cfg) {
    cfg.validate();

    const bool with_embeddings = bundle.embeddings.has_value();
    FeatureMatrix m;
    push_columns(m, bundle, cfg, with_embeddings);

    std::optional<PopulationIndex> pop;
    if (bundle.population_tiles && !bundle.population_tiles->empty())
        pop = PopulationIndex::build(*bundle.population_tiles);

    std::optional<MobilityContext> mob;
    if (bundle.mobility_tiles && !bundle.mobility_tiles->empty()) {
        static const std::vector<ingest::MovementEdge> kNoEdges;
        const auto &edges = bundle.movement_edges ? *bundle.movement_edges : kNoEdges;
        mob = MobilityContext::build(build_mobility_graph(edges, *bundle.mobility_tiles), cfg);
    }

    std::unordered_map<std::string, const std::vector<double> *> demo_rows;
    if (bundle.demographics) {
        if (bundle.demographics->columns.size() != ingest::kDemographicColumns)
            throw Error("ColumnCountMismatch", "demographics table width is not fixed at " +
                                                   std::to_string(ingest::kDemographicColumns));
        for (const auto &row : bundle.demographics->rows)
            demo_rows.emplace(row.location_id, &row.values);
    }

    static const std::vector<ingest::PoiPoint> kNoPois;
    const PoiIndex pois =
        PoiIndex::build(bundle.poi_points ? *bundle.poi_points : kNoPois, bundle.poi_categories);

    static const std::vector<ingest::RoadSegment> kNoRoads;
    const auto &roads = bundle.road_segments ? *bundle.road_segments : kNoRoads;

    geo::SpatialIndex buildings;
    if (bundle.building_points) {
        std::vector<std::pair<std::string, geo::GeoPoint>> items;
        items.reserve(bundle.building_points->size());
        for (std::size_t i = 0; i < bundle.building_points->size(); ++i)
            items.emplace_back(zero_pad(i, 9), (*bundle.building_points)[i].pt);
        buildings = geo::SpatialIndex::build(std::move(items));
    }

    static const std::vector<ingest::CellRow> kNoCells;
    const CellIndex cells = CellIndex::build(bundle.cells ? *bundle.cells : kNoCells);

    static const std::vector<ingest::NightlightPixel> kNoPixels;
    const NightlightIndex night =
        NightlightIndex::build(bundle.nightlight_pixels ? *bundle.nightlight_pixels : kNoPixels);

    std::unordered_map<std::string, const std::vector<double> *> embed_rows;
    if (with_embeddings)
        for (const auto &row : bundle.embeddings->rows)
            embed_rows.emplace(row.location_id, &row.values);

    m.location_ids.reserve(locations.size());
    m.years.reserve(locations.size());
    m.values.reserve(locations.size());
    for (const auto &loc : locations) {
        m.location_ids.push_back(loc.id);
        m.years.push_back(loc.year);
        std::vector<double> row;
        row.reserve(m.columns.size());

        std::array<double, 9> popf;
        popf.fill(kNaN);
        if (pop) popf = population_features(loc.pt, *pop, cfg);
        row.insert(row.end(), popf.begin(), popf.end());

        std::array<double, 27> mobf;
        mobf.fill(kNaN);
        if (mob) mobf = mobility_features(loc.pt, *mob, cfg);
        row.insert(row.end(), mobf.begin(), mobf.end());

        if (bundle.demographics) {
            auto it = demo_rows.find(loc.id);
            if (it != demo_rows.end())
                row.insert(row.end(), it->second->begin(), it->second->end());
            else
                row.insert(row.end(), ingest::kDemographicColumns, kNaN);
        } else {
            row.insert(row.end(), ingest::kDemographicColumns, kNaN);
        }

        const auto infra = infrastructure_features(loc.pt, pois, roads, buildings, cfg);
        row.insert(row.end(), infra.begin(), infra.end());

        const auto conn = connectivity_features(loc.pt, cells, cfg);
        row.insert(row.end(), conn.begin(), conn.end());

        const auto nightf = nightlight_features(loc.pt, loc.year, night, cfg);
        row.insert(row.end(), nightf.begin(), nightf.end());

        row.push_back(loc.urban ? 1.0 : 0.0);

        if (with_embeddings) {
            auto it = embed_rows.find(loc.id);
            if (it != embed_rows.end())
                row.insert(row.end(), it->second->begin(), it->second->end());
            else
                row.insert(row.end(), ingest::EmbeddingsTable::kDim, kNaN);
        }

        m.values.push_back(std::move(row));
    }
    return m;
}

Standardization standardize_per_year(FeatureMatrix &m) {
    std::map<int, std::vector<std::size_t>> rows_of_year;
    for (std::size_t i = 0; i < m.n_rows(); ++i) rows_of_year[m.years[i]].push_back(i);

    Standardization params;
    for (std::size_t c = 0; c < m.n_cols(); ++c) {
        if (m.sources[c] != "nightlight") continue;
        for (const auto &[year, rows] : rows_of_year) {
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t r : rows) {
                const double v = m.values[r][c];
                if (!std::isnan(v)) {
                    sum += v;
                    n += 1;
                }
            }
            if (n == 0) continue;
            const double mean = sum / static_cast<double>(n);
            double ss = 0.0;
            for (std::size_t r : rows) {
                const double v = m.values[r][c];
                if (!std::isnan(v)) ss += (v - mean) * (v - mean);
            }
            const double sd = std::sqrt(ss / static_cast<double>(n));
            params.stats[m.columns[c]][year] = {mean, sd};
            for (std::size_t r : rows) {
                double &v = m.values[r][c];
                if (std::isnan(v)) continue;
                v = sd > 0.0 ? (v - mean) / sd : 0.0;
            }
        }
    }
    return params;
}

void apply_standardization(FeatureMatrix &m, const Standardization &p,
                           std::vector<std::string> *warnings) {
    std::set<int> unmatched;
    for (std::size_t c = 0; c < m.n_cols(); ++c) {
        if (m.sources[c] != "nightlight") continue;
        const auto col_it = p.stats.find(m.columns[c]);
        for (std::size_t r = 0; r < m.n_rows(); ++r) {
            double &v = m.values[r][c];
            if (std::isnan(v)) continue;
            if (col_it == p.stats.end()) {
                unmatched.insert(m.years[r]);
                continue;
            }
            const auto year_it = col_it->second.find(m.years[r]);
            if (year_it == col_it->second.end()) {
                unmatched.insert(m.years[r]);
                continue;
            }
            const double mean = year_it->second[0];
            const double sd = year_it->second[1];
            v = sd > 0.0 ? (v - mean) / sd : 0.0;
        }
    }
    if (warnings) {
        for (int year : unmatched) {
            warnings->push_back("no nightlight standardization fitted for year " +
                                std::to_string(year) + "; raw values kept");
        }
    }
}

void write_feature_csv(const FeatureMatrix &m, const std::filesystem::path &csv_file,
                       const std::filesystem::path &sidecar_file) {
    csv::Table t;
    t.header = {"location_id", "year"};
    t.header.insert(t.header.end(), m.columns.begin(), m.columns.end());
    t.rows.reserve(m.n_rows());
    for (std::size_t i = 0; i < m.n_rows(); ++i) {
        std::vector<std::string> row;
        row.reserve(2 + m.n_cols());
        row.push_back(m.location_ids[i]);
        row.push_back(std::to_string(m.years[i]));
        for (double v : m.values[i]) row.push_back(std::isnan(v) ? "" : format_double(v));
        t.rows.push_back(std::move(row));
    }
    csv::write_csv(csv_file, t);

    nlohmann::json cols = nlohmann::json::array();
    for (std::size_t c = 0; c < m.n_cols(); ++c)
        cols.push_back({{"name", m.columns[c]},
                        {"source", m.sources[c]},
                        {"per_year_standardized", m.sources[c] == "nightlight"}});
    nlohmann::json doc = {{"missing", ""}, {"columns", cols}};
    std::ofstream out(sidecar_file);
    if (!out) throw Error("IoError", "cannot write " + sidecar_file.string());
    out << doc.dump(2) << "\n";
}

FeatureMatrix read_feature_csv(const std::filesystem::path &csv_file,
                               const std::filesystem::path &sidecar_file) {
    std::ifstream in(sidecar_file);
    if (!in) throw Error("IoError", "cannot read " + sidecar_file.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw Error("JsonError", sidecar_file.string() + ": " + e.what());
    }

    FeatureMatrix m;
    for (const auto &col : doc.at("columns")) {
        m.columns.push_back(col.at("name").get<std::string>());
        m.sources.push_back(col.at("source").get<std::string>());
    }

    const csv::Table t = csv::read_csv(csv_file);
    if (t.header.size() != 2 + m.columns.size() || t.header[0] != "location_id" ||
        t.header[1] != "year")
        throw Error("SchemaError", csv_file.string() + ": feature header mismatch");
    for (std::size_t c = 0; c < m.columns.size(); ++c)
        if (t.header[2 + c] != m.columns[c])
            throw Error("SchemaError",
                        csv_file.string() + ": column order differs from sidecar");

    for (const auto &row : t.rows) {
        m.location_ids.push_back(row[0]);
        m.years.push_back(static_cast<int>(parse_int(row[1])));
        std::vector<double> vals;
        vals.reserve(m.columns.size());
        for (std::size_t c = 0; c < m.columns.size(); ++c) {
            const std::string &cell = row[2 + c];
            vals.push_back(cell.empty() ? kNaN : parse_double(cell));
        }
        m.values.push_back(std::move(vals));
    }
    return m;
}

} // namespace povmap::features
