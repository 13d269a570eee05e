#include "povmap/geo.hpp"

#include "povmap/common.hpp"
#include "povmap/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace povmap::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Relative inflation applied to chord-space pruning bounds. Chord and
// haversine agree mathematically but not bit for bit; the margin guarantees
// the tree never prunes a point the final haversine check would accept.
constexpr double kPruneSlack = 1e-9;

void to_unit_sphere(const GeoPoint &p, double &x, double &y, double &z) {
    const double lat = p.lat * kDegToRad;
    const double lon = p.lon * kDegToRad;
    const double c = std::cos(lat);
    x = c * std::cos(lon);
    y = c * std::sin(lon);
    z = std::sin(lat);
}

// Squared chord length subtended by a great-circle distance of d_km.
double chord_sq_of_km(double d_km) {
    const double half_angle = d_km / (2.0 * kEarthRadiusKm);
    if (half_angle >= std::numbers::pi / 2.0) {
        return 4.0;
    }
    const double s = std::sin(half_angle);
    return 4.0 * s * s;
}

double inflate(double chord_sq) { return chord_sq * (1.0 + kPruneSlack) + 1e-30; }

} // namespace

double wrap_lon_delta(double d) {
    while (d > 180.0) d -= 360.0;
    while (d < -180.0) d += 360.0;
    return d;
}

void validate_point(const GeoPoint &p, const std::string &context) {
    if (!std::isfinite(p.lat) || !std::isfinite(p.lon) || p.lat < -90.0 ||
        p.lat > 90.0 || p.lon < -180.0 || p.lon > 180.0) {
        throw Error("InvalidCoordinate", context + ": (" + format_double(p.lat) +
                                             ", " + format_double(p.lon) + ")");
    }
}

double haversine_km(const GeoPoint &a, const GeoPoint &b) {
    const double lat1 = a.lat * kDegToRad;
    const double lat2 = b.lat * kDegToRad;
    const double dlat = (b.lat - a.lat) * kDegToRad;
    const double dlon = (b.lon - a.lon) * kDegToRad;
    const double sh = std::sin(dlat / 2.0);
    const double sl = std::sin(dlon / 2.0);
    const double h = sh * sh + std::cos(lat1) * std::cos(lat2) * sl * sl;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

double BBox::half_dlat() const { return (width_km / kKmPerDegree) / 2.0; }

double BBox::half_dlon() const {
    const double c = std::cos(center.lat * kDegToRad);
    if (c <= 0.0) {
        return 360.0; // box around a pole spans all longitudes
    }
    return (width_km / (kKmPerDegree * c)) / 2.0;
}

bool BBox::contains(const GeoPoint &p) const {
    if (std::abs(p.lat - center.lat) > half_dlat()) {
        return false;
    }
    return std::abs(wrap_lon_delta(p.lon - center.lon)) <= half_dlon();
}

SpatialIndex SpatialIndex::build(std::vector<std::pair<std::string, GeoPoint>> points) {
    SpatialIndex idx;
    idx.ids_.reserve(points.size());
    idx.pts_.reserve(points.size());
    for (auto &[id, pt] : points) {
        validate_point(pt, "SpatialIndex point '" + id + "'");
        idx.ids_.push_back(std::move(id));
        idx.pts_.push_back(pt);
    }
    const std::size_t n = idx.pts_.size();
    idx.order_.resize(n);
    idx.xs_.resize(n);
    idx.ys_.resize(n);
    idx.zs_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        idx.order_[i] = static_cast<std::uint32_t>(i);
        to_unit_sphere(idx.pts_[i], idx.xs_[i], idx.ys_[i], idx.zs_[i]);
    }
    if (n > 0) {
        idx.nodes_.reserve(2 * n / 8 + 4);
        idx.root_ = idx.build_node(0, static_cast<std::uint32_t>(n));
    }
    return idx;
}

std::int32_t SpatialIndex::build_node(std::uint32_t begin, std::uint32_t end) {
    constexpr std::uint32_t kLeafSize = 16;
    Node nd;
    nd.begin = begin;
    nd.end = end;
    double mn[3] = {1e9, 1e9, 1e9}, mx[3] = {-1e9, -1e9, -1e9};
    nd.lat_min = 90.0;
    nd.lat_max = -90.0;
    nd.lon_min = 180.0;
    nd.lon_max = -180.0;
    for (std::uint32_t i = begin; i < end; ++i) {
        const std::uint32_t slot = order_[i];
        const double c[3] = {xs_[i], ys_[i], zs_[i]};
        for (int a = 0; a < 3; ++a) {
            mn[a] = std::min(mn[a], c[a]);
            mx[a] = std::max(mx[a], c[a]);
        }
        nd.lat_min = std::min(nd.lat_min, pts_[slot].lat);
        nd.lat_max = std::max(nd.lat_max, pts_[slot].lat);
        nd.lon_min = std::min(nd.lon_min, pts_[slot].lon);
        nd.lon_max = std::max(nd.lon_max, pts_[slot].lon);
    }
    for (int a = 0; a < 3; ++a) {
        nd.min3[a] = mn[a];
        nd.max3[a] = mx[a];
    }
    if (end - begin <= kLeafSize) {
        nodes_.push_back(nd);
        return static_cast<std::int32_t>(nodes_.size() - 1);
    }

    int axis = 0;
    double widest = mx[0] - mn[0];
    for (int a = 1; a < 3; ++a) {
        if (mx[a] - mn[a] > widest) {
            widest = mx[a] - mn[a];
            axis = a;
        }
    }
    const std::uint32_t mid = begin + (end - begin) / 2;
    // Sort slots, coords move with them; median split on the widest axis.
    std::vector<std::uint32_t> perm(end - begin);
    for (std::uint32_t i = 0; i < end - begin; ++i) perm[i] = i;
    const double *key = axis == 0 ? xs_.data() : axis == 1 ? ys_.data() : zs_.data();
    std::nth_element(perm.begin(), perm.begin() + (mid - begin), perm.end(),
                     [&](std::uint32_t a, std::uint32_t b) {
                         const double ka = key[begin + a], kb = key[begin + b];
                         if (ka != kb) return ka < kb;
                         return order_[begin + a] < order_[begin + b];
                     });
    // Apply the permutation to the parallel arrays.
    std::vector<std::uint32_t> new_order(end - begin);
    std::vector<double> nx(end - begin), ny(end - begin), nz(end - begin);
    for (std::uint32_t i = 0; i < end - begin; ++i) {
        const std::uint32_t src = begin + perm[i];
        new_order[i] = order_[src];
        nx[i] = xs_[src];
        ny[i] = ys_[src];
        nz[i] = zs_[src];
    }
    std::copy(new_order.begin(), new_order.end(), order_.begin() + begin);
    std::copy(nx.begin(), nx.end(), xs_.begin() + begin);
    std::copy(ny.begin(), ny.end(), ys_.begin() + begin);
    std::copy(nz.begin(), nz.end(), zs_.begin() + begin);

    nd.leaf = false;
    nodes_.push_back(nd);
    const std::int32_t self = static_cast<std::int32_t>(nodes_.size() - 1);
    const std::int32_t left = build_node(begin, mid);
    const std::int32_t right = build_node(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
}

double SpatialIndex::min_chord_sq_to_box(const Node &nd, double qx, double qy,
                                         double qz) const {
    const double cx = std::clamp(qx, nd.min3[0], nd.max3[0]) - qx;
    const double cy = std::clamp(qy, nd.min3[1], nd.max3[1]) - qy;
    const double cz = std::clamp(qz, nd.min3[2], nd.max3[2]) - qz;
    return cx * cx + cy * cy + cz * cz;
}

void SpatialIndex::nearest_walk(std::int32_t node, const GeoPoint &q, double qx,
                                double qy, double qz, std::size_t &best_slot,
                                double &best_km, double &best_chord_bound) const {
    const Node &nd = nodes_[static_cast<std::size_t>(node)];
    if (min_chord_sq_to_box(nd, qx, qy, qz) > best_chord_bound) {
        return;
    }
    if (!nd.leaf) {
        const Node &l = nodes_[static_cast<std::size_t>(nd.left)];
        const Node &r = nodes_[static_cast<std::size_t>(nd.right)];
        const double dl = min_chord_sq_to_box(l, qx, qy, qz);
        const double dr = min_chord_sq_to_box(r, qx, qy, qz);
        if (dl <= dr) {
            nearest_walk(nd.left, q, qx, qy, qz, best_slot, best_km, best_chord_bound);
            nearest_walk(nd.right, q, qx, qy, qz, best_slot, best_km, best_chord_bound);
        } else {
            nearest_walk(nd.right, q, qx, qy, qz, best_slot, best_km, best_chord_bound);
            nearest_walk(nd.left, q, qx, qy, qz, best_slot, best_km, best_chord_bound);
        }
        return;
    }
    double chord[16];
    const std::uint32_t count = nd.end - nd.begin;
    kernels::ops().chord_sq_batch(qx, qy, qz, xs_.data() + nd.begin,
                                  ys_.data() + nd.begin, zs_.data() + nd.begin,
                                  count, chord);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (chord[i] > best_chord_bound) {
            continue;
        }
        const std::size_t slot = order_[nd.begin + i];
        const double d = haversine_km(q, pts_[slot]);
        const bool better =
            best_slot == static_cast<std::size_t>(-1) || d < best_km ||
            (d == best_km && ids_[slot] < ids_[best_slot]);
        if (better) {
            best_slot = slot;
            best_km = d;
            best_chord_bound = inflate(chord_sq_of_km(d));
        }
    }
}

std::pair<std::size_t, double> SpatialIndex::nearest_slot(const GeoPoint &q) const {
    if (empty()) {
        throw Error("EmptyIndex", "nearest() on an empty SpatialIndex");
    }
    validate_point(q, "nearest query");
    double qx, qy, qz;
    to_unit_sphere(q, qx, qy, qz);
    std::size_t best_slot = static_cast<std::size_t>(-1);
    double best_km = 0.0;
    double bound = 4.0 + 1.0; // larger than any chord^2
    nearest_walk(root_, q, qx, qy, qz, best_slot, best_km, bound);
    return {best_slot, best_km};
}

std::pair<std::string, double> SpatialIndex::nearest(const GeoPoint &q) const {
    auto [slot, d] = nearest_slot(q);
    return {ids_[slot], d};
}

void SpatialIndex::radius_walk(std::int32_t node, const GeoPoint &q, double qx,
                               double qy, double qz, double r_km,
                               double chord_sq_bound,
                               std::vector<std::pair<std::size_t, double>> &out) const {
    const Node &nd = nodes_[static_cast<std::size_t>(node)];
    if (min_chord_sq_to_box(nd, qx, qy, qz) > chord_sq_bound) {
        return;
    }
    if (!nd.leaf) {
        radius_walk(nd.left, q, qx, qy, qz, r_km, chord_sq_bound, out);
        radius_walk(nd.right, q, qx, qy, qz, r_km, chord_sq_bound, out);
        return;
    }
    double chord[16];
    const std::uint32_t count = nd.end - nd.begin;
    kernels::ops().chord_sq_batch(qx, qy, qz, xs_.data() + nd.begin,
                                  ys_.data() + nd.begin, zs_.data() + nd.begin,
                                  count, chord);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (chord[i] > chord_sq_bound) {
            continue;
        }
        const std::size_t slot = order_[nd.begin + i];
        const double d = haversine_km(q, pts_[slot]);
        if (d <= r_km) {
            out.emplace_back(slot, d);
        }
    }
}

std::vector<std::pair<std::size_t, double>>
SpatialIndex::within_radius_slots(const GeoPoint &q, double r_km) const {
    if (!(r_km > 0.0)) {
        throw Error("NonPositiveRadius", "radius must be > 0, got " + format_double(r_km));
    }
    validate_point(q, "radius query");
    std::vector<std::pair<std::size_t, double>> out;
    if (empty()) {
        return out;
    }
    double qx, qy, qz;
    to_unit_sphere(q, qx, qy, qz);
    radius_walk(root_, q, qx, qy, qz, r_km, inflate(chord_sq_of_km(r_km)), out);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> SpatialIndex::within_radius(const GeoPoint &q, double r_km) const {
    auto slots = within_radius_slots(q, r_km);
    std::vector<std::string> out;
    out.reserve(slots.size());
    for (const auto &[slot, d] : slots) {
        out.push_back(ids_[slot]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

void SpatialIndex::bbox_walk(std::int32_t node, const BBox &box, double lat_lo,
                             double lat_hi, double lon_lo, double lon_hi,
                             std::vector<std::size_t> &out) const {
    const Node &nd = nodes_[static_cast<std::size_t>(node)];
    if (nd.lat_max < lat_lo || nd.lat_min > lat_hi || nd.lon_max < lon_lo ||
        nd.lon_min > lon_hi) {
        return;
    }
    if (!nd.leaf) {
        bbox_walk(nd.left, box, lat_lo, lat_hi, lon_lo, lon_hi, out);
        bbox_walk(nd.right, box, lat_lo, lat_hi, lon_lo, lon_hi, out);
        return;
    }
    for (std::uint32_t i = nd.begin; i < nd.end; ++i) {
        const std::size_t slot = order_[i];
        if (box.contains(pts_[slot])) {
            out.push_back(slot);
        }
    }
}

std::vector<std::size_t> SpatialIndex::within_bbox_slots(const BBox &box) const {
    if (!(box.width_km > 0.0)) {
        throw Error("InvalidBBox", "width_km must be > 0");
    }
    validate_point(box.center, "bbox center");
    std::vector<std::size_t> out;
    if (empty()) {
        return out;
    }
    const double lat_lo = box.center.lat - box.half_dlat();
    const double lat_hi = box.center.lat + box.half_dlat();
    const double lon_lo = box.center.lon - box.half_dlon();
    const double lon_hi = box.center.lon + box.half_dlon();
    if (lon_hi - lon_lo >= 360.0) {
        bbox_walk(root_, box, lat_lo, lat_hi, -180.0, 180.0, out);
    } else if (lon_lo < -180.0) {
        bbox_walk(root_, box, lat_lo, lat_hi, -180.0, lon_hi, out);
        bbox_walk(root_, box, lat_lo, lat_hi, lon_lo + 360.0, 180.0, out);
    } else if (lon_hi > 180.0) {
        bbox_walk(root_, box, lat_lo, lat_hi, lon_lo, 180.0, out);
        bbox_walk(root_, box, lat_lo, lat_hi, -180.0, lon_hi - 360.0, out);
    } else {
        bbox_walk(root_, box, lat_lo, lat_hi, lon_lo, lon_hi, out);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::string> SpatialIndex::within_bbox(const BBox &box) const {
    auto slots = within_bbox_slots(box);
    std::vector<std::string> out;
    out.reserve(slots.size());
    for (std::size_t slot : slots) {
        out.push_back(ids_[slot]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace povmap::geo
